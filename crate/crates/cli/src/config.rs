use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use uavloc_core::scenarios::{ExplorationConfig, TrackingConfig};

/// Reads a JSON config; an empty (or whitespace-only) file means all defaults.
fn parse_json<T: DeserializeOwned + Default>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    if text.trim().is_empty() {
        return Ok(T::default());
    }
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

pub fn load_tracking_config(path: &Path) -> Result<TrackingConfig> {
    let cfg: TrackingConfig = parse_json(path)?;
    cfg.validate().with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}

pub fn load_exploration_config(path: &Path) -> Result<ExplorationConfig> {
    let mut cfg: ExplorationConfig = parse_json(path)?;
    // Relative map paths are taken relative to the config file.
    if let (Some(map), Some(dir)) = (&cfg.map, path.parent()) {
        if map.is_relative() {
            cfg.map = Some(dir.join(map));
        }
    }
    let map = cfg.load_map().with_context(|| format!("cannot load map for {}", path.display()))?;
    cfg.validate(&map).with_context(|| format!("invalid config {}", path.display()))?;
    Ok(cfg)
}
