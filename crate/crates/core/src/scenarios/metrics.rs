use crate::error::{Error, Result};
use crate::inference::LogOddsGrid;
use crate::sensing::TrueMap;

/// Fraction of `errors` at or below each threshold.
pub fn empirical_cdf(errors: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if errors.is_empty() {
        return vec![0.0; thresholds.len()];
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    thresholds.iter().map(|t| sorted.partition_point(|e| e <= t) as f64 / n).collect()
}

/// `0, step, 2*step, ..., max` inclusive.
pub fn threshold_grid(max: f64, step: f64) -> Vec<f64> {
    let n = (max / step).round() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapScore {
    /// Agreement on observed cells; 0 when nothing was observed.
    pub accuracy: f64,
    /// Fraction of cells with a non-zero log-odds value.
    pub coverage: f64,
}

/// Thresholds each observed cell at log-odds 0 and compares with the truth.
pub fn map_accuracy(grid: &LogOddsGrid, truth: &TrueMap) -> Result<MapScore> {
    if grid.width() != truth.width() || grid.height() != truth.height() {
        return Err(Error::DimensionMismatch(format!(
            "grid {}x{} vs map {}x{}",
            grid.width(),
            grid.height(),
            truth.width(),
            truth.height()
        )));
    }
    let mut observed = 0usize;
    let mut correct = 0usize;
    for (v, occ) in grid.values().iter().zip(truth.occupancy()) {
        if *v != 0.0 {
            observed += 1;
            if (*v > 0.0) == *occ {
                correct += 1;
            }
        }
    }
    let n = grid.values().len() as f64;
    Ok(MapScore {
        accuracy: if observed == 0 { 0.0 } else { correct as f64 / observed as f64 },
        coverage: observed as f64 / n,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = ranks(x);
    let ry = ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in &idx[i..=j] {
            out[*k] = r;
        }
        i = j + 1;
    }
    out
}

/// First episode (0-based) whose value reaches `fraction` of the last one.
pub fn episodes_to_fraction(curve: &[f64], fraction: f64) -> Option<usize> {
    let last = *curve.last()?;
    curve.iter().position(|v| *v >= fraction * last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{RngStream, Vec2};

    #[test]
    fn cdf_examples() {
        assert_eq!(empirical_cdf(&[1.0, 2.0, 3.0], &[2.0]), vec![2.0 / 3.0]);
        let mut rng = RngStream::new(1, 0);
        let e: Vec<f64> = (0..500).map(|_| rng.gaussian().abs() * 3.0).collect();
        let c = empirical_cdf(&e, &threshold_grid(10.0, 0.1));
        assert_eq!(c.len(), 101);
        assert!(c.windows(2).all(|w| w[0] <= w[1]));
        assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn map_accuracy_cases() {
        let mut truth = TrueMap::new(6, 5, 0.5, Vec2::ZERO).unwrap();
        let mut rng = RngStream::new(9, 0);
        for cy in 0..5 {
            for cx in 0..6 {
                truth.set(cx, cy, rng.bernoulli(0.3));
            }
        }
        let mut grid = LogOddsGrid::like(&truth);
        let zero = map_accuracy(&grid, &truth).unwrap();
        assert_eq!(zero, MapScore { accuracy: 0.0, coverage: 0.0 });
        for cy in 0..5 {
            for cx in 0..6 {
                grid.set(cx, cy, if truth.is_occupied(cx, cy) { 3.0 } else { -3.0 });
            }
        }
        assert_eq!(map_accuracy(&grid, &truth).unwrap(), MapScore { accuracy: 1.0, coverage: 1.0 });

        // Random reconstruction vs a brute-force comparison.
        let mut noisy = LogOddsGrid::like(&truth);
        for cy in 0..5 {
            for cx in 0..6 {
                noisy.set(cx, cy, [-1.0, 0.0, 1.0][rng.index(3)]);
            }
        }
        let (mut obs, mut ok) = (0, 0);
        for cy in 0..5 {
            for cx in 0..6 {
                let v = noisy.get(cx, cy);
                if v != 0.0 {
                    obs += 1;
                    ok += usize::from((v > 0.0) == truth.is_occupied(cx, cy));
                }
            }
        }
        let s = map_accuracy(&noisy, &truth).unwrap();
        assert_eq!(s.accuracy, ok as f64 / obs as f64);
        assert_eq!(s.coverage, obs as f64 / 30.0);

        let other = LogOddsGrid::new(5, 5, 0.5, Vec2::ZERO);
        assert!(map_accuracy(&other, &truth).is_err());
    }

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 100.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // Textbook example with ties: x ranks 1,2.5,2.5,4.
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]);
        assert!((r - 0.9486832980505138).abs() < 1e-12);
    }

    #[test]
    fn fraction_reached() {
        assert_eq!(episodes_to_fraction(&[0.0, 1.0, 4.0, 8.0, 10.0], 0.5), Some(3));
        assert_eq!(episodes_to_fraction(&[], 0.5), None);
    }
}
