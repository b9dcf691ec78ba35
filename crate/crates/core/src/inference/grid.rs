use serde::{Deserialize, Serialize};

use crate::ops::{self, OpCounts};
use crate::sensing::{EnergyMatrix, TrueMap};
use crate::sim::Vec2;

/// Log-odds magnitude bound; keeps cells from locking in.
pub const LOG_ODDS_LIMIT: f64 = 10.0;

/// Per-cell independent occupancy belief stored as log-odds (0 = unknown).
#[derive(Debug, Clone, PartialEq)]
pub struct LogOddsGrid {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: Vec2,
    values: Vec<f64>,
}

impl LogOddsGrid {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: Vec2) -> Self {
        Self { width, height, cell_size, origin, values: vec![0.0; width * height] }
    }

    /// Empty grid with the same geometry as `map`.
    pub fn like(map: &TrueMap) -> Self {
        Self::new(map.width(), map.height(), map.cell_size(), map.origin())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, cx: usize, cy: usize) -> f64 {
        self.values[cy * self.width + cx]
    }

    pub fn set(&mut self, cx: usize, cy: usize, v: f64) {
        self.values[cy * self.width + cx] = v.clamp(-LOG_ODDS_LIMIT, LOG_ODDS_LIMIT);
    }

    pub fn add(&mut self, idx: usize, delta: f64) {
        let v = &mut self.values[idx];
        *v = (*v + delta).clamp(-LOG_ODDS_LIMIT, LOG_ODDS_LIMIT);
    }

    pub fn probability(&self, cx: usize, cy: usize) -> f64 {
        1.0 / (1.0 + (-self.get(cx, cy)).exp())
    }

    pub fn cell_index(&self, p: Vec2) -> Option<usize> {
        let gx = ((p.x - self.origin.x) / self.cell_size).floor();
        let gy = ((p.y - self.origin.y) / self.cell_size).floor();
        (gx >= 0.0 && gy >= 0.0 && (gx as usize) < self.width && (gy as usize) < self.height)
            .then(|| gy as usize * self.width + gx as usize)
    }

    /// Cell-wise sum of independent log-odds beliefs over the same geometry.
    pub fn merged<'a>(grids: impl IntoIterator<Item = &'a LogOddsGrid>) -> Option<LogOddsGrid> {
        let mut it = grids.into_iter();
        let mut out = it.next()?.clone();
        for g in it {
            for (i, v) in g.values.iter().enumerate() {
                out.add(i, *v);
            }
        }
        Some(out)
    }
}

/// Inverse sensor model turning a beam's energy profile into cell updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseSensorModel {
    pub p_hit: f64,
    pub p_miss: f64,
    /// Detection threshold above the scan's noise floor.
    pub detection_margin_db: f64,
    /// How far a beam with no detection is trusted to be empty (m).
    pub max_free_range: f64,
}

impl Default for InverseSensorModel {
    fn default() -> Self {
        Self { p_hit: 0.7, p_miss: 0.4, detection_margin_db: 10.0, max_free_range: 2.0 }
    }
}

impl InverseSensorModel {
    pub fn hit_increment(&self) -> f64 {
        (self.p_hit / (1.0 - self.p_hit)).ln()
    }

    pub fn miss_increment(&self) -> f64 {
        (self.p_miss / (1.0 - self.p_miss)).ln()
    }
}

/// Applies one scan taken at `pose` to the grid.
///
/// Per beam the first bin above the detection threshold marks its cell
/// occupied and every earlier bin marks its cell free; later bins are left
/// alone. A beam with no detection frees cells out to `max_free_range`.
/// Returns the indices of the cells touched, in update order.
pub fn og_update(grid: &mut LogOddsGrid, scan: &EnergyMatrix, pose: Vec2, model: &InverseSensorModel) -> Vec<usize> {
    let threshold = scan.noise_floor_dbm() + model.detection_margin_db;
    let bw = scan.bin_width();
    let (hit_inc, miss_inc) = (model.hit_increment(), model.miss_increment());
    let mut t_lik = OpCounts::default();
    let mut t_upd = OpCounts::default();
    let mut touched = Vec::new();
    let mut beam_cells: Vec<usize> = Vec::new();
    for (k, &theta) in scan.angles().iter().enumerate() {
        let dir = Vec2::from_angle(theta);
        let profile = scan.beam(k);
        let mut hit_bin = None;
        for (j, &v) in profile.iter().enumerate() {
            t_lik.adds += 1;
            if v > threshold {
                hit_bin = Some(j);
                break;
            }
        }
        let n_free = match hit_bin {
            Some(j) => j,
            None => ((model.max_free_range / bw).floor() as usize + 1).min(profile.len()),
        };
        let hit_cell = hit_bin.and_then(|j| grid.cell_index(pose + dir * ((j as f64 + 0.5) * bw)));
        beam_cells.clear();
        for j in 0..n_free {
            t_upd.multiplies += 2;
            if let Some(c) = grid.cell_index(pose + dir * (j as f64 * bw)) {
                if Some(c) != hit_cell && beam_cells.last() != Some(&c) && !beam_cells.contains(&c) {
                    beam_cells.push(c);
                }
            }
        }
        for &c in &beam_cells {
            grid.add(c, miss_inc);
            t_upd.adds += 1;
            touched.push(c);
        }
        if let Some(c) = hit_cell {
            t_upd.multiplies += 2;
            grid.add(c, hit_inc);
            t_upd.adds += 1;
            touched.push(c);
        }
    }
    ops::record("og_likelihood", t_lik);
    ops::record("og_log_odds", t_upd);
    touched
}
