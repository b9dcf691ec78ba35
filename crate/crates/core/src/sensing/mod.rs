//! Synthetic sensors: range-only radar echoes, sub-THz range-angle scans of a
//! reference map, and the target's beacon used for detection.

mod beacon;
mod map;
mod range;
mod thz;

pub use beacon::{beacon_observation, BeaconParams};
pub use map::{first_hit, RayHit, TrueMap};
pub use range::{measure_range, RangeMeasurement, RangeNoise};
pub use thz::{scan_thz, EnergyMatrix, ThzRadarParams, SPEED_OF_LIGHT};

pub(crate) fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub(crate) fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}
