//! End-to-end runs of the two missions and the metrics reported on them.

pub mod complexity;
mod exploration;
mod metrics;
mod tracking;

pub use exploration::{
    run_exploration, run_exploration_with, EpisodeRecord, ExplorationConfig, ExplorationResult, RewardConfig,
    BUNDLED_MAP,
};
pub use metrics::{empirical_cdf, episodes_to_fraction, map_accuracy, spearman, threshold_grid, MapScore};
pub use tracking::{run_tracking, run_tracking_with, BeliefRecord, RunOptions, TrackingConfig, TrackingResult};
