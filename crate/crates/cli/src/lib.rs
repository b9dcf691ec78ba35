//! Command-line plumbing: config files, seeded batches and CSV artifacts.

pub mod batch;
pub mod config;
pub mod output;

pub use batch::{run_explore_batch, run_track_batch, BatchArgs, BatchReport};
pub use config::{load_exploration_config, load_tracking_config};
