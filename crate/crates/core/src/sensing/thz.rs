use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::map::{first_hit, TrueMap};
use super::{dbm_to_watts, watts_to_dbm};
use crate::error::{Error, Result};
use crate::sim::{RngStream, UavPose, Vec2};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sub-THz mapping radar. The array is abstracted into `n_directions`
/// beams spread over the half-plane in front of the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThzRadarParams {
    /// Hz
    pub carrier: f64,
    pub eirp_dbm: f64,
    pub noise_figure_db: f64,
    /// Hz
    pub bandwidth: f64,
    pub n_antennas: usize,
    pub n_directions: usize,
    pub scattering_coeff: f64,
    /// m
    pub scatterer_length: f64,
    /// Exponent of the cosine backscatter lobe.
    pub lobe_width: f64,
    /// Gain of the detection (beacon) antenna.
    pub rx_gain_dbi: f64,
}

impl Default for ThzRadarParams {
    fn default() -> Self {
        Self {
            carrier: 140e9,
            eirp_dbm: 30.0,
            noise_figure_db: 4.0,
            bandwidth: 1e9,
            n_antennas: 100,
            n_directions: 10,
            scattering_coeff: 0.5,
            scatterer_length: 0.5,
            lobe_width: 1.0,
            rx_gain_dbi: 0.0,
        }
    }
}

impl ThzRadarParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier", self.carrier),
            ("bandwidth", self.bandwidth),
            ("scattering_coeff", self.scattering_coeff),
            ("scatterer_length", self.scatterer_length),
            ("lobe_width", self.lobe_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.n_directions == 0 || self.n_antennas == 0 {
            return Err(Error::param("n_directions", "radar needs at least one beam and one antenna"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier
    }

    /// Range resolution `c / (2 B)`.
    pub fn bin_width(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth)
    }

    /// Thermal noise floor `-174 dBm/Hz + 10 log10(B) + NF`.
    pub fn noise_floor_dbm(&self) -> f64 {
        -174.0 + 10.0 * self.bandwidth.log10() + self.noise_figure_db
    }

    pub fn array_gain_db(&self) -> f64 {
        10.0 * (self.n_antennas as f64).log10()
    }

    /// Beam bearings for a scan centred on `heading`.
    pub fn beam_angles(&self, heading: f64) -> Vec<f64> {
        let n = self.n_directions as f64;
        (0..self.n_directions).map(|k| heading - PI / 2.0 + (k as f64 + 0.5) * PI / n).collect()
    }

    /// Two-way echo power (W) from a rough scatterer at `distance` seen at
    /// `cos_incidence` off its surface normal.
    pub fn echo_power(&self, distance: f64, cos_incidence: f64) -> f64 {
        let lambda = self.wavelength();
        let rcs = (self.scattering_coeff * self.scatterer_length).powi(2) * cos_incidence.abs().powf(self.lobe_width);
        let gain = 10f64.powf(self.array_gain_db() / 10.0);
        dbm_to_watts(self.eirp_dbm) * gain * lambda * lambda * rcs / ((4.0 * PI).powi(3) * distance.powi(4))
    }
}

/// Range-angle energy observation, `n_directions x n_bins`, values in dBm.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMatrix {
    values: Vec<f64>,
    n_bins: usize,
    angles: Vec<f64>,
    bin_width: f64,
    noise_floor_dbm: f64,
}

impl EnergyMatrix {
    pub fn new(values: Vec<f64>, angles: Vec<f64>, bin_width: f64, noise_floor_dbm: f64) -> Result<Self> {
        if angles.is_empty() || !values.len().is_multiple_of(angles.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} values do not split into {} beams",
                values.len(),
                angles.len()
            )));
        }
        let n_bins = values.len() / angles.len();
        Ok(Self { values, n_bins, angles, bin_width, noise_floor_dbm })
    }

    pub fn n_directions(&self) -> usize {
        self.angles.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        self.noise_floor_dbm
    }

    pub fn beam(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_bins..(k + 1) * self.n_bins]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Simulates one scan from `uav` looking along `heading`.
///
/// Each beam is traced to the first occupied cell (obstacles are opaque) and
/// the echo is deposited in the bin `round(distance / bin_width)`. Receiver
/// noise is added to every bin; without an RNG the bins carry the mean noise
/// power instead of a random draw.
pub fn scan_thz(
    uav: &UavPose,
    heading: f64,
    map: &TrueMap,
    params: &ThzRadarParams,
    mut rng: Option<&mut RngStream>,
) -> Result<EnergyMatrix> {
    let cell = map.cell_of(uav.position).ok_or(Error::InvalidPosition {
        x: uav.position.x,
        y: uav.position.y,
        reason: "UAV outside the map",
    })?;
    if map.is_occupied(cell.0, cell.1) {
        return Err(Error::InvalidPosition { x: uav.position.x, y: uav.position.y, reason: "UAV inside an occupied cell" });
    }
    let bin_width = params.bin_width();
    let max_range = map.diagonal();
    let n_bins = (max_range / bin_width).ceil() as usize;
    let noise_w = dbm_to_watts(params.noise_floor_dbm());
    let angles = params.beam_angles(heading);
    let mut values = Vec::with_capacity(angles.len() * n_bins);
    for &theta in &angles {
        let dir = Vec2::from_angle(theta);
        let mut echo = vec![0.0; n_bins];
        if let Some(hit) = first_hit(map, uav.position, dir, max_range) {
            let bin = (hit.distance / bin_width).round() as usize;
            if bin < n_bins && hit.distance > 0.0 {
                echo[bin] = params.echo_power(hit.distance, dir.dot(hit.normal));
            }
        }
        for a in echo {
            let power = match rng.as_deref_mut() {
                Some(r) => {
                    let s = (noise_w / 2.0).sqrt();
                    let re = a.sqrt() + s * r.gaussian();
                    let im = s * r.gaussian();
                    re * re + im * im
                }
                None => a + noise_w,
            };
            values.push(watts_to_dbm(power));
        }
    }
    EnergyMatrix::new(values, angles, bin_width, params.noise_floor_dbm())
}
