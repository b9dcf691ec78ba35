use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::Vec2;

/// Reference occupancy map. Cell `(cx, cy)` covers
/// `origin + [cx, cx+1) * cell_size` by `origin + [cy, cy+1) * cell_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueMap {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: Vec2,
    occupied: Vec<bool>,
}

impl TrueMap {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: Vec2) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param("map", "width and height must be positive"));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::param("cell_size", format!("must be positive, got {cell_size}")));
        }
        Ok(Self { width, height, cell_size, origin, occupied: vec![false; width * height] })
    }

    /// Parses the plain-text grid format: a header `W H cell_size`, then `H`
    /// rows of `W` characters, `#` occupied and `.` free. The first row is
    /// the top of the map (largest `cy`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::MapParse { line: 1, reason: "empty map file".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::MapParse { line: hline + 1, reason: "header must be `W H cell_size`".into() });
        }
        let bad = |what: &str| Error::MapParse { line: hline + 1, reason: format!("invalid {what}") };
        let width: usize = fields[0].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[1].parse().map_err(|_| bad("height"))?;
        let cell_size: f64 = fields[2].parse().map_err(|_| bad("cell_size"))?;
        let mut map = Self::new(width, height, cell_size, Vec2::ZERO)?;
        let mut rows = 0;
        for (lineno, line) in lines {
            if rows == height {
                return Err(Error::MapParse { line: lineno + 1, reason: format!("more than {height} rows") });
            }
            let row = line.trim_end();
            if row.chars().count() != width {
                return Err(Error::MapParse {
                    line: lineno + 1,
                    reason: format!("expected {width} cells, found {}", row.chars().count()),
                });
            }
            let cy = height - 1 - rows;
            for (cx, ch) in row.chars().enumerate() {
                let occ = match ch {
                    '#' => true,
                    '.' => false,
                    other => {
                        return Err(Error::MapParse { line: lineno + 1, reason: format!("unexpected character {other:?}") })
                    }
                };
                map.set(cx, cy, occ);
            }
            rows += 1;
        }
        if rows != height {
            return Err(Error::MapParse { line: hline + 1, reason: format!("expected {height} rows, found {rows}") });
        }
        Ok(map)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::MapParse { line: 0, reason: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.width, self.height, self.cell_size);
        for cy in (0..self.height).rev() {
            for cx in 0..self.width {
                out.push(if self.is_occupied(cx, cy) { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
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

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn cell_of_index(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn set(&mut self, cx: usize, cy: usize, occupied: bool) {
        let i = self.index(cx, cy);
        self.occupied[i] = occupied;
    }

    pub fn is_occupied(&self, cx: usize, cy: usize) -> bool {
        self.occupied[self.index(cx, cy)]
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    pub fn cell_of(&self, p: Vec2) -> Option<(usize, usize)> {
        let gx = ((p.x - self.origin.x) / self.cell_size).floor();
        let gy = ((p.y - self.origin.y) / self.cell_size).floor();
        (gx >= 0.0 && gy >= 0.0 && (gx as usize) < self.width && (gy as usize) < self.height)
            .then_some((gx as usize, gy as usize))
    }

    pub fn center(&self, cx: usize, cy: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (cx as f64 + 0.5) * self.cell_size,
            self.origin.y + (cy as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64 * self.cell_size).hypot(self.height as f64 * self.cell_size)
    }
}

/// First occupied cell along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Distance from the ray origin to the entry point of the hit cell.
    pub distance: f64,
    pub cell: (usize, usize),
    /// Outward normal of the face the ray entered through.
    pub normal: Vec2,
}

/// Grid traversal (Amanatides-Woo) from `from` along unit `dir`, up to
/// `max_range`. Returns `None` if the ray leaves the map or the range first.
pub fn first_hit(map: &TrueMap, from: Vec2, dir: Vec2, max_range: f64) -> Option<RayHit> {
    let (mut cx, mut cy) = map.cell_of(from)?;
    let cs = map.cell_size;
    let g = (from - map.origin) * (1.0 / cs);
    let axis = |d: f64, g: f64, c: usize| -> (i64, f64, f64) {
        if d > 0.0 {
            (1, ((c as f64 + 1.0) - g) * cs / d, cs / d)
        } else if d < 0.0 {
            (-1, (g - c as f64) * cs / -d, cs / -d)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (sx, mut tx, dtx) = axis(dir.x, g.x, cx);
    let (sy, mut ty, dty) = axis(dir.y, g.y, cy);
    loop {
        let (t, normal) = if tx < ty {
            let t = tx;
            tx += dtx;
            let nx = cx as i64 + sx;
            if nx < 0 || nx >= map.width as i64 {
                return None;
            }
            cx = nx as usize;
            (t, Vec2::new(-(sx as f64), 0.0))
        } else {
            let t = ty;
            ty += dty;
            let ny = cy as i64 + sy;
            if ny < 0 || ny >= map.height as i64 {
                return None;
            }
            cy = ny as usize;
            (t, Vec2::new(0.0, -(sy as f64)))
        };
        if t > max_range {
            return None;
        }
        if map.is_occupied(cx, cy) {
            return Some(RayHit { distance: t, cell: (cx, cy), normal });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "4 3 0.5\n####\n#..#\n####\n";

    #[test]
    fn parses_and_round_trips() {
        let m = TrueMap::parse(SAMPLE).unwrap();
        assert_eq!((m.width(), m.height(), m.cell_size()), (4, 3, 0.5));
        assert!(!m.is_occupied(1, 1));
        assert!(m.is_occupied(0, 1));
        assert_eq!(TrueMap::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn first_row_is_top_of_map() {
        let m = TrueMap::parse("2 2 1\n#.\n..\n").unwrap();
        assert!(m.is_occupied(0, 1));
        assert!(!m.is_occupied(0, 0));
    }

    #[test]
    fn rejects_malformed_files() {
        assert!(TrueMap::parse("").is_err());
        assert!(TrueMap::parse("3 1 0.5\n..\n").is_err());
        assert!(TrueMap::parse("2 1 0.5\n.x\n").is_err());
        assert!(TrueMap::parse("2 2 0.5\n..\n").is_err());
        assert!(TrueMap::parse("2 1 -1\n..\n").is_err());
    }

    #[test]
    fn ray_hits_wall_at_expected_distance() {
        let mut m = TrueMap::new(20, 20, 0.5, Vec2::ZERO).unwrap();
        for cy in 0..20 {
            m.set(10, cy, true);
        }
        let hit = first_hit(&m, Vec2::new(2.25, 5.25), Vec2::new(1.0, 0.0), 100.0).unwrap();
        assert!((hit.distance - 2.75).abs() < 1e-12);
        assert_eq!(hit.cell, (10, 10));
        assert_eq!(hit.normal, Vec2::new(-1.0, 0.0));
    }

    #[test]
    fn ray_leaving_map_misses() {
        let m = TrueMap::new(4, 4, 1.0, Vec2::ZERO).unwrap();
        assert!(first_hit(&m, Vec2::new(0.5, 0.5), Vec2::new(0.6, 0.8), 100.0).is_none());
    }

    #[test]
    fn diagonal_ray_matches_fine_marching() {
        let mut m = TrueMap::new(30, 30, 0.5, Vec2::ZERO).unwrap();
        for &(x, y) in &[(20, 11), (12, 25), (5, 3), (25, 25)] {
            m.set(x, y, true);
        }
        let from = Vec2::new(7.3, 7.1);
        for k in 0..360 {
            let dir = Vec2::from_angle(k as f64 * std::f64::consts::PI / 180.0);
            let fast = first_hit(&m, from, dir, 100.0).map(|h| h.cell);
            // Oracle: march in tiny steps.
            let mut slow = None;
            let mut t = 0.0;
            while t < 100.0 {
                match m.cell_of(from + dir * t) {
                    None => break,
                    Some(c) if m.is_occupied(c.0, c.1) => {
                        slow = Some(c);
                        break;
                    }
                    _ => t += 1e-4,
                }
            }
            assert_eq!(fast, slow, "angle {k}");
        }
    }
}
