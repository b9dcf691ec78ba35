use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{dbm_to_watts, ThzRadarParams};
use crate::sim::{RngStream, Vec2};

/// The target's beacon as seen by the detection receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeaconParams {
    /// m
    pub reading_range: f64,
    pub tag_eirp_dbm: f64,
    pub n_samples: usize,
}

impl Default for BeaconParams {
    fn default() -> Self {
        Self { reading_range: 7.35, tag_eirp_dbm: 0.0, n_samples: 32 }
    }
}

impl BeaconParams {
    /// Received beacon power (W) at `distance` through free space.
    pub fn received_power(&self, distance: f64, radio: &ThzRadarParams) -> f64 {
        let fspl = (4.0 * PI * distance.max(1e-3) / radio.wavelength()).powi(2);
        dbm_to_watts(self.tag_eirp_dbm + radio.rx_gain_dbi) / fspl
    }

    /// Per-sample SNR (linear); zero outside the reading range.
    pub fn snr(&self, distance: f64, radio: &ThzRadarParams) -> f64 {
        if distance > self.reading_range {
            return 0.0;
        }
        self.received_power(distance, radio) / dbm_to_watts(radio.noise_floor_dbm())
    }
}

/// Complex baseband samples at the detection receiver, normalised so the
/// noise has unit power per sample.
pub fn beacon_observation(
    uav: Vec2,
    target: Vec2,
    n_samples: usize,
    beacon: &BeaconParams,
    radio: &ThzRadarParams,
    rng: &mut RngStream,
) -> Vec<Complex64> {
    let amplitude = beacon.snr(uav.distance(target), radio).sqrt();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n_samples)
        .map(|_| Complex64::new(amplitude + s * rng.gaussian(), s * rng.gaussian()))
        .collect()
}
