use serde::{Deserialize, Serialize};

use crate::sim::{RngStream, UavPose, Vec2};

/// One range echo as carried in the payload: who measured, when, what, and
/// from where.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMeasurement {
    pub uav_id: u32,
    pub timestamp: u64,
    pub range: f64,
    pub uav_position: Vec2,
    /// m^2
    pub noise_var: f64,
}

/// Range-dependent noise of the tracking radar.
///
/// `std(d) = sigma0 * sqrt(1 + (d / reference_range)^2)`: flat at short range
/// and growing linearly once the echo weakens. A missing reference range gives
/// constant noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeNoise {
    pub sigma0: f64,
    pub reference_range: Option<f64>,
}

impl RangeNoise {
    pub fn constant(sigma: f64) -> Self {
        Self { sigma0: sigma, reference_range: None }
    }

    pub fn variance_at(&self, distance: f64) -> f64 {
        let s2 = self.sigma0 * self.sigma0;
        match self.reference_range {
            Some(r) => s2 * (1.0 + (distance / r).powi(2)),
            None => s2,
        }
    }

    /// d(variance)/d(distance).
    pub fn variance_slope(&self, distance: f64) -> f64 {
        match self.reference_range {
            Some(r) => self.sigma0 * self.sigma0 * 2.0 * distance / (r * r),
            None => 0.0,
        }
    }

    pub fn std_at(&self, distance: f64) -> f64 {
        self.variance_at(distance).sqrt()
    }
}

impl Default for RangeNoise {
    fn default() -> Self {
        Self { sigma0: 1.0, reference_range: Some(300.0) }
    }
}

pub fn measure_range(uav: &UavPose, target: Vec2, sigma: f64, timestamp: u64, rng: &mut RngStream) -> RangeMeasurement {
    debug_assert!(sigma >= 0.0);
    let truth = uav.position.distance(target);
    let noise = if sigma > 0.0 { sigma * rng.gaussian() } else { 0.0 };
    RangeMeasurement {
        uav_id: uav.id,
        timestamp,
        range: (truth + noise).max(0.0),
        uav_position: uav.position,
        noise_var: sigma * sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_range_is_euclidean() {
        let mut rng = RngStream::new(0, 0);
        let m = measure_range(&UavPose::new(1, Vec2::ZERO), Vec2::new(3.0, 4.0), 0.0, 7, &mut rng);
        assert_eq!(m.range, 5.0);
        assert_eq!(m.noise_var, 0.0);
        assert_eq!(m.timestamp, 7);
        assert_eq!(m.uav_position, Vec2::ZERO);
    }

    #[test]
    fn sample_std_matches_configured_sigma() {
        let mut rng = RngStream::new(5, 11);
        let uav = UavPose::new(1, Vec2::ZERO);
        let target = Vec2::new(300.0, 400.0);
        let n = 100_000;
        let errs: Vec<f64> = (0..n).map(|_| measure_range(&uav, target, 1.0, 0, &mut rng).range - 500.0).collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((0.99..=1.01).contains(&std), "std {std}");
    }

    #[test]
    fn noise_grows_with_distance() {
        let n = RangeNoise { sigma0: 1.0, reference_range: Some(100.0) };
        assert_eq!(n.variance_at(0.0), 1.0);
        assert!((n.variance_at(100.0) - 2.0).abs() < 1e-12);
        let h = 1e-6;
        let fd = (n.variance_at(50.0 + h) - n.variance_at(50.0 - h)) / (2.0 * h);
        assert!((fd - n.variance_slope(50.0)).abs() < 1e-6);
        assert_eq!(RangeNoise::constant(2.0).variance_at(1e6), 4.0);
    }
}
