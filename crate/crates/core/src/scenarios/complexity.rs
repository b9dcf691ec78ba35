//! Operation-count sweeps over problem size for the instrumented routines.

use nalgebra::{DMatrix, DVector};

use crate::control::{q_update, Experience, QParams, QTable};
use crate::error::Result;
use crate::inference::{ekf_predict, ekf_update, og_update, GaussianBelief, InverseSensorModel, LogOddsGrid, MotionModel};
use crate::ops::{self, counters_report, loglog_exponent, CountingScope, OpCounts};
use crate::sensing::{scan_thz, RangeMeasurement, ThzRadarParams, TrueMap};
use crate::sim::{UavPose, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub routine: &'static str,
    pub dimension: usize,
    pub counts: OpCounts,
}

/// Covariance prediction cost against state dimension.
pub fn sweep_ekf_predict(state_dims: &[usize]) -> Result<Vec<SweepPoint>> {
    let _scope = CountingScope::new();
    let mut out = Vec::new();
    for &n in state_dims {
        ops::reset();
        let model = MotionModel::constant_velocity(n / 2, 0.1);
        let n = model.dim();
        let b = GaussianBelief::new(DVector::zeros(n), DMatrix::identity(n, n))?;
        ekf_predict(&b, &model)?;
        out.push(SweepPoint { routine: "ekf_predict_cov", dimension: n, counts: counters_report("ekf_predict_cov")? });
    }
    Ok(out)
}

/// Kalman gain cost against the number of range measurements in one update.
pub fn sweep_ekf_gain(measurement_counts: &[usize]) -> Result<Vec<SweepPoint>> {
    let _scope = CountingScope::new();
    let mut out = Vec::new();
    let belief = GaussianBelief::planar(Vec2::ZERO, Vec2::ZERO, 100.0, 1.0)?;
    for &m in measurement_counts {
        ops::reset();
        let ms: Vec<RangeMeasurement> = (0..m)
            .map(|i| {
                let p = Vec2::from_angle(i as f64 * 2.399) * 100.0;
                RangeMeasurement { uav_id: i as u32, timestamp: 0, range: 100.0, uav_position: p, noise_var: 1.0 }
            })
            .collect();
        ekf_update(&belief, &ms)?;
        out.push(SweepPoint { routine: "ekf_gain", dimension: m, counts: counters_report("ekf_gain")? });
    }
    Ok(out)
}

/// Log-odds update cost against the number of cells the beams cross, on an
/// open map with the free-space range as the knob.
pub fn sweep_og_update(free_ranges: &[f64]) -> Result<Vec<SweepPoint>> {
    let _scope = CountingScope::new();
    let map = TrueMap::new(400, 400, 0.5, Vec2::ZERO)?;
    let pose = UavPose::new(1, map.center(200, 200));
    let scan = scan_thz(&pose, 0.3, &map, &ThzRadarParams::default(), None)?;
    let mut out = Vec::new();
    for &r in free_ranges {
        ops::reset();
        let mut grid = LogOddsGrid::like(&map);
        let model = InverseSensorModel { max_free_range: r, ..Default::default() };
        let touched = og_update(&mut grid, &scan, pose.position, &model);
        out.push(SweepPoint { routine: "og_log_odds", dimension: touched.len(), counts: counters_report("og_log_odds")? });
    }
    Ok(out)
}

/// Single Q-update cost against the number of actions.
pub fn sweep_q_update(action_counts: &[usize]) -> Result<Vec<SweepPoint>> {
    let _scope = CountingScope::new();
    let mut out = Vec::new();
    for &n in action_counts {
        ops::reset();
        let mut t = QTable::new(2, n);
        let e = Experience { uav_id: 1, state: 0, action: 0, reward: 1.0, next_state: 1, step: 0 };
        q_update(&mut t, &e, &QParams::default());
        out.push(SweepPoint { routine: "q_update", dimension: n, counts: counters_report("q_update")? });
    }
    Ok(out)
}

/// Default sweeps for every instrumented routine.
pub fn standard_sweeps() -> Result<Vec<SweepPoint>> {
    let mut all = sweep_ekf_predict(&[4, 8, 16, 32, 64, 128])?;
    all.extend(sweep_ekf_gain(&[8, 16, 32, 64, 128])?);
    all.extend(sweep_og_update(&[4.0, 8.0, 16.0, 32.0, 64.0])?);
    all.extend(sweep_q_update(&[4, 16, 64, 256, 1024, 4096])?);
    Ok(all)
}

/// Log-log slope of total operations against dimension for one routine.
pub fn exponent(points: &[SweepPoint], routine: &str) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.routine == routine)
        .map(|p| (p.dimension as f64, p.counts.total() as f64))
        .collect();
    loglog_exponent(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponents_match_expected_orders() {
        let s = standard_sweeps().unwrap();
        let e = exponent(&s, "ekf_predict_cov");
        assert!((2.5..=3.5).contains(&e), "{e}");
        let e = exponent(&s, "ekf_gain");
        assert!((2.5..=3.5).contains(&e), "{e}");
        let e = exponent(&s, "og_log_odds");
        assert!((0.8..=1.2).contains(&e), "{e}");
        let e = exponent(&s, "q_update");
        assert!((0.8..=1.2).contains(&e), "{e}");
    }

    #[test]
    fn og_sweep_dimension_grows_with_range() {
        let s = sweep_og_update(&[4.0, 8.0, 16.0]).unwrap();
        assert!(s[0].dimension < s[1].dimension && s[1].dimension < s[2].dimension);
    }
}
