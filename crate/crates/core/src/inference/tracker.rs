//! Out-of-order tolerant tracker used by every inference node.
//!
//! Measurements can arrive late (multi-hop relaying) or in bursts (edge
//! delivery). The tracker keeps a checkpoint belief that has absorbed all
//! measurements up to `checkpoint_time`, plus a buffer of the most recent
//! `buffer_steps` steps. Each estimate replays the buffer in timestamp order
//! from the checkpoint; measurements older than the checkpoint are dropped.

use std::collections::BTreeMap;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use super::ekf::{ekf_predict, ekf_update, GaussianBelief, MotionModel};
use crate::error::{Error, Result};
use crate::sensing::RangeMeasurement;
use crate::sim::Vec2;

/// Initial belief when a tracker sees its first measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackPrior {
    /// Fallback mean when the first batch cannot be multilaterated.
    pub center: Vec2,
    /// m^2
    pub position_var: f64,
    /// (m/step)^2
    pub velocity_var: f64,
}

impl Default for TrackPrior {
    fn default() -> Self {
        Self { center: Vec2::new(500.0, 500.0), position_var: 1e4, velocity_var: 10.0 }
    }
}

#[derive(Debug, Clone)]
pub struct BufferedTracker {
    model: MotionModel,
    prior: TrackPrior,
    buffer_steps: u64,
    checkpoint: Option<(i64, GaussianBelief)>,
    pending: BTreeMap<u64, Vec<RangeMeasurement>>,
    dropped: usize,
}

impl BufferedTracker {
    pub fn new(model: MotionModel, prior: TrackPrior, buffer_steps: u64) -> Self {
        Self { model, prior, buffer_steps: buffer_steps.max(1), checkpoint: None, pending: BTreeMap::new(), dropped: 0 }
    }

    /// Queues a measurement. Returns `false` if it was dropped as too old or
    /// as a duplicate of one already queued.
    pub fn ingest(&mut self, m: RangeMeasurement) -> bool {
        if let Some((t, _)) = &self.checkpoint {
            if m.timestamp as i64 <= *t {
                self.dropped += 1;
                return false;
            }
        }
        let slot = self.pending.entry(m.timestamp).or_default();
        if slot.iter().any(|x| x.uav_id == m.uav_id) {
            return false;
        }
        slot.push(m);
        slot.sort_by_key(|x| x.uav_id);
        true
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn is_initialized(&self) -> bool {
        self.checkpoint.is_some()
    }

    /// Posterior at step `t` given everything ingested so far, or `None` if
    /// nothing has been received yet.
    pub fn estimate(&mut self, t: u64) -> Result<Option<GaussianBelief>> {
        if self.checkpoint.is_none() {
            let Some((&t0, first)) = self.pending.iter().next() else {
                return Ok(None);
            };
            let center = multilaterate(first).unwrap_or(self.prior.center);
            let prior = GaussianBelief::planar(center, Vec2::ZERO, self.prior.position_var, self.prior.velocity_var)?;
            self.checkpoint = Some((t0 as i64 - 1, prior));
        }
        let (mut ck_time, mut ck) = self.checkpoint.take().expect("initialised above");
        if (t as i64) < ck_time {
            self.checkpoint = Some((ck_time, ck));
            return Err(Error::NonMonotoneClock { now: t, last: ck_time as u64 });
        }
        let horizon = t as i64 - self.buffer_steps as i64;
        while ck_time < horizon {
            ck_time += 1;
            ck = ekf_predict(&ck, &self.model)?;
            if let Some(ms) = self.pending.remove(&(ck_time as u64)) {
                ck = ekf_update(&ck, &ms)?;
            }
        }
        let mut belief = ck.clone();
        for step in (ck_time + 1)..=(t as i64) {
            belief = ekf_predict(&belief, &self.model)?;
            if let Some(ms) = self.pending.get(&(step as u64)) {
                belief = ekf_update(&belief, ms)?;
            }
        }
        self.checkpoint = Some((ck_time, ck));
        Ok(Some(belief))
    }
}

/// Weighted least-squares position fix from simultaneous ranges.
///
/// Needs at least three measurements whose UAV positions are not collinear;
/// returns `None` otherwise or if Gauss-Newton fails to settle.
pub fn multilaterate(measurements: &[RangeMeasurement]) -> Option<Vec2> {
    if measurements.len() < 3 {
        return None;
    }
    let n = measurements.len() as f64;
    let centroid = measurements.iter().fold(Vec2::ZERO, |acc, m| acc + m.uav_position) * (1.0 / n);
    let mut spread = Matrix2::zeros();
    for m in measurements {
        let d = m.uav_position - centroid;
        spread += Vector2::new(d.x, d.y) * Vector2::new(d.x, d.y).transpose();
    }
    let eig = spread.symmetric_eigenvalues();
    if eig.min() <= 1e-6 * eig.max().max(1e-12) {
        return None;
    }
    let mut p = centroid + Vec2::new(1e-3, 1e-3);
    for _ in 0..50 {
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for m in measurements {
            let d = p - m.uav_position;
            let r = d.norm().max(1e-9);
            let row = Vector2::new(d.x / r, d.y / r);
            let w = 1.0 / m.noise_var.max(1e-12);
            jtj += row * row.transpose() * w;
            jtr += row * ((m.range - r) * w);
        }
        let step = jtj.try_inverse()? * jtr;
        p += Vec2::new(step.x, step.y);
        if step.norm() < 1e-9 {
            break;
        }
    }
    p.is_finite().then_some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RngStream;

    fn m(id: u32, t: u64, uav: Vec2, target: Vec2) -> RangeMeasurement {
        RangeMeasurement { uav_id: id, timestamp: t, range: uav.distance(target), uav_position: uav, noise_var: 1.0 }
    }

    fn corners() -> [Vec2; 4] {
        [Vec2::new(0.0, 0.0), Vec2::new(1000.0, 0.0), Vec2::new(1000.0, 1000.0), Vec2::new(0.0, 1000.0)]
    }

    #[test]
    fn multilateration_recovers_noiseless_position() {
        let target = Vec2::new(420.0, 610.0);
        let ms: Vec<_> = corners().iter().enumerate().map(|(i, &u)| m(i as u32, 0, u, target)).collect();
        let p = multilaterate(&ms).unwrap();
        assert!(p.distance(target) < 1e-6);
    }

    #[test]
    fn multilateration_needs_three_non_collinear_positions() {
        let target = Vec2::new(420.0, 610.0);
        let line: Vec<_> = (0..4).map(|i| m(i, 0, Vec2::new(i as f64 * 100.0, 0.0), target)).collect();
        assert!(multilaterate(&line).is_none());
        assert!(multilaterate(&line[..2]).is_none());
    }

    #[test]
    fn late_measurement_equals_in_order_processing() {
        let target = |t: u64| Vec2::new(500.0 + t as f64, 500.0);
        let model = MotionModel::planar(0.01);
        let mut rng = RngStream::new(3, 3);
        let mut all = Vec::new();
        for t in 0..10u64 {
            for (i, &u) in corners().iter().enumerate() {
                let mut x = m(i as u32, t, u, target(t));
                x.range += rng.gaussian();
                all.push(x);
            }
        }
        let mut in_order = BufferedTracker::new(model.clone(), TrackPrior::default(), 5);
        for x in &all {
            in_order.ingest(*x);
        }
        let a = in_order.estimate(9).unwrap().unwrap();

        // Same data, but after the first step UAV 2's readings arrive two steps late.
        let mut late = BufferedTracker::new(model, TrackPrior::default(), 5);
        for t in 0..10u64 {
            for x in all.iter().filter(|x| x.timestamp == t && (x.uav_id != 2 || t == 0)) {
                late.ingest(*x);
            }
            if t >= 3 {
                late.ingest(*all.iter().find(|x| x.timestamp == t - 2 && x.uav_id == 2).unwrap());
            }
            late.estimate(t).unwrap();
        }
        for x in all.iter().filter(|x| x.timestamp >= 8 && x.uav_id == 2) {
            late.ingest(*x);
        }
        let b = late.estimate(9).unwrap().unwrap();
        assert!((a.mean() - b.mean()).amax() < 1e-9);
        assert!((a.cov() - b.cov()).amax() < 1e-9);
    }

    #[test]
    fn too_old_and_duplicate_measurements_are_dropped() {
        let mut tr = BufferedTracker::new(MotionModel::planar(0.01), TrackPrior::default(), 2);
        let target = Vec2::new(500.0, 500.0);
        for t in 0..6 {
            assert!(tr.ingest(m(1, t, Vec2::ZERO, target)));
            tr.estimate(t).unwrap();
        }
        assert!(!tr.ingest(m(1, 5, Vec2::ZERO, target)));
        assert!(!tr.ingest(m(2, 1, Vec2::new(1000.0, 0.0), target)));
        assert_eq!(tr.dropped(), 1);
    }

    #[test]
    fn uninitialised_tracker_has_no_estimate() {
        let mut tr = BufferedTracker::new(MotionModel::planar(0.01), TrackPrior::default(), 5);
        assert!(tr.estimate(3).unwrap().is_none());
        assert!(!tr.is_initialized());
    }

    #[test]
    fn tracker_converges_on_straight_target() {
        let model = MotionModel::planar(0.01);
        let mut tr = BufferedTracker::new(model, TrackPrior::default(), 5);
        let mut rng = RngStream::new(1, 1);
        let truth = |t: u64| Vec2::new(450.0 + t as f64, 520.0 - 0.5 * t as f64);
        let mut last = None;
        for t in 0..60 {
            for (i, &u) in corners().iter().enumerate() {
                let mut x = m(i as u32, t, u, truth(t));
                x.range += rng.gaussian();
                tr.ingest(x);
            }
            last = tr.estimate(t).unwrap();
        }
        let b = last.unwrap();
        assert!(b.position().distance(truth(59)) < 2.0);
        assert!(b.velocity().distance(Vec2::new(1.0, -0.5)) < 0.2);
    }
}
