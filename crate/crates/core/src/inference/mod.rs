//! State estimation: the range-only EKF and its sliding-buffer tracker, the
//! log-odds occupancy grid, and the energy-detector GLRT.

mod ekf;
mod glrt;
mod grid;
pub mod linalg;
mod tracker;

pub use ekf::{ekf_predict, ekf_update, kf_update, GaussianBelief, LinearObservation, MotionModel};
pub use glrt::{energy_statistic, glrt_detect, glrt_threshold, DetectionResult, GlrtTable};
pub use grid::{og_update, InverseSensorModel, LogOddsGrid, LOG_ODDS_LIMIT};
pub use tracker::{multilaterate, BufferedTracker, TrackPrior};
