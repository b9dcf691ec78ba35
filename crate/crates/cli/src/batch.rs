use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;
use uavloc_core::scenarios::complexity::{self, SweepPoint};
use uavloc_core::scenarios::{
    empirical_cdf, run_exploration_with, run_tracking_with, threshold_grid, ExplorationConfig, ExplorationResult,
    RunOptions, TrackingConfig, TrackingResult,
};

use crate::config::{load_exploration_config, load_tracking_config};
use crate::output::{prepare_dir, write_csv, write_json};

/// Arguments shared by both subcommands.
#[derive(Debug, Clone)]
pub struct BatchArgs {
    pub config: PathBuf,
    pub runs: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub counters: bool,
    /// Also write per-step beliefs, trajectories, comm logs, Q-tables and so on.
    pub trace: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BatchReport {
    pub scenario: String,
    pub completed: Vec<u64>,
    pub failed: Vec<RunFailure>,
    pub files: Vec<String>,
    /// One human-readable line per run, in seed order.
    #[serde(skip)]
    pub summaries: Vec<String>,
}

impl BatchReport {
    pub fn success(&self) -> bool {
        self.failed.is_empty()
    }
}

fn check_args(args: &BatchArgs) -> Result<()> {
    if args.runs == 0 {
        bail!("runs must be at least 1");
    }
    if args.seed.checked_add(args.runs - 1).is_none() {
        bail!("seed range {} + {} overflows", args.seed, args.runs);
    }
    prepare_dir(&args.out)
}

fn seeds(args: &BatchArgs) -> Vec<u64> {
    (0..args.runs).map(|i| args.seed + i).collect()
}

/// Splits per-run outcomes into successes and failures, in seed order.
fn partition<T>(outcomes: Vec<(u64, std::result::Result<T, String>)>, report: &mut BatchReport) -> Vec<T> {
    let mut ok = Vec::new();
    for (seed, outcome) in outcomes {
        match outcome {
            Ok(r) => {
                report.completed.push(seed);
                ok.push(r);
            }
            Err(error) => {
                report.summaries.push(format!("run {seed}: FAILED: {error}"));
                report.failed.push(RunFailure { seed, error });
            }
        }
    }
    ok
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn finish(args: &BatchArgs, mut report: BatchReport, written: Vec<PathBuf>) -> Result<BatchReport> {
    report.files = written.iter().map(|p| file_name(p)).collect();
    write_json(&args.out, "manifest.json", &report)?;
    Ok(report)
}

fn track_invariants(cfg: &TrackingConfig, r: &TrackingResult) -> std::result::Result<(), String> {
    if r.errors.iter().flatten().any(|e| !e.is_finite()) {
        return Err("non-finite localization error".into());
    }
    let d_min = cfg.constraints.d_min_uav;
    if cfg.n_uavs > 1 && r.min_separation < d_min - 1e-6 {
        return Err(format!("UAV separation {:.3} m below {d_min} m", r.min_separation));
    }
    Ok(())
}

fn track_summary(cfg: &TrackingConfig, r: &TrackingResult) -> String {
    let after = r.errors_after(cfg.burn_in);
    let cdf2 = empirical_cdf(&after, &[2.0])[0];
    let mean = if after.is_empty() { f64::NAN } else { after.iter().sum::<f64>() / after.len() as f64 };
    format!(
        "run {}: scheme={} r_m={} L={} cdf_2m={:.4} mean_error_m={:.3} min_separation_m={:.2}",
        r.seed,
        cfg.scheme(),
        cfg.comm.range_r,
        cfg.comm.edge_delay,
        cdf2,
        mean,
        r.min_separation
    )
}

/// Runs `args.runs` tracking missions and writes the CSV artifacts.
pub fn run_track_batch(args: &BatchArgs) -> Result<BatchReport> {
    let cfg = load_tracking_config(&args.config)?;
    check_args(args)?;
    let opts = RunOptions { count_ops: args.counters };
    let outcomes: Vec<_> = seeds(args)
        .into_par_iter()
        .map(|seed| {
            let r = run_tracking_with(&cfg, seed, opts)
                .map_err(|e| e.to_string())
                .and_then(|r| track_invariants(&cfg, &r).map(|_| r));
            (seed, r)
        })
        .collect();
    let mut report = BatchReport { scenario: "track".into(), ..Default::default() };
    let results = partition(outcomes, &mut report);
    for r in &results {
        report.summaries.push(track_summary(&cfg, r));
    }
    report.summaries.sort_by_key(|s| summary_seed(s));
    if !report.success() {
        return finish(args, report, Vec::new());
    }
    let written = write_track_outputs(args, &cfg, &results)?;
    finish(args, report, written)
}

fn summary_seed(line: &str) -> u64 {
    line.strip_prefix("run ").and_then(|s| s.split(':').next()).and_then(|s| s.parse().ok()).unwrap_or(0)
}

fn write_cdf(dir: &Path, name: &str, cfg: &TrackingConfig, errors: &[f64]) -> Result<PathBuf> {
    let grid = threshold_grid(10.0, 0.1);
    let cdf = empirical_cdf(errors, &grid);
    write_csv(dir, name, &["scheme", "r_m", "L", "threshold_m", "cdf"], |w| {
        for (t, c) in grid.iter().zip(&cdf) {
            w.serialize((cfg.scheme(), cfg.comm.range_r, cfg.comm.edge_delay, t, c))?;
        }
        Ok(())
    })
}

fn write_track_outputs(args: &BatchArgs, cfg: &TrackingConfig, results: &[TrackingResult]) -> Result<Vec<PathBuf>> {
    let dir = args.out.as_path();
    let mut written = Vec::new();
    let scheme = cfg.scheme();
    let (r_m, l, loss) = (cfg.comm.range_r, cfg.comm.edge_delay, cfg.comm.link_loss);
    written.push(write_csv(
        dir,
        "errors.csv",
        &["run_id", "step", "uav_id", "error_m", "scheme", "r_m", "L", "link_loss"],
        |w| {
            for r in results {
                for (step, row) in r.errors.iter().enumerate() {
                    for (uav, e) in row.iter().enumerate() {
                        w.serialize((r.seed, step, uav + 1, e, scheme, r_m, l, loss))?;
                    }
                }
            }
            Ok(())
        },
    )?);
    let after: Vec<f64> = results.iter().flat_map(|r| r.errors_after(cfg.burn_in)).collect();
    let full: Vec<f64> = results.iter().flat_map(|r| r.errors_after(0)).collect();
    written.push(write_cdf(dir, "cdf.csv", cfg, &after)?);
    written.push(write_cdf(dir, "cdf_full.csv", cfg, &full)?);

    if args.trace {
        written.push(write_csv(
            dir,
            "beliefs.csv",
            &["run_id", "step", "uav_id", "mean_x", "mean_y", "cov_trace"],
            |w| {
                for r in results {
                    for b in &r.beliefs {
                        w.serialize((r.seed, b.step, b.node_id, b.mean.x, b.mean.y, b.cov_trace))?;
                    }
                }
                Ok(())
            },
        )?);
        written.push(write_csv(
            dir,
            "trajectories.csv",
            &["run_id", "step", "object", "id", "x", "y"],
            |w| {
                for r in results {
                    for (step, p) in r.target_track.iter().enumerate() {
                        w.serialize((r.seed, step, "target", 0, p.x, p.y))?;
                    }
                    for (step, row) in r.uav_tracks.iter().enumerate() {
                        for (uav, p) in row.iter().enumerate() {
                            w.serialize((r.seed, step, "uav", uav + 1, p.x, p.y))?;
                        }
                    }
                }
                Ok(())
            },
        )?);
        written.push(write_csv(dir, "comm.csv", &["run_id", "step", "src", "dst", "hops", "dropped"], |w| {
            for r in results {
                for e in &r.comm_log {
                    w.serialize((r.seed, e.step, e.src, e.dst, e.hops, u8::from(e.dropped)))?;
                }
            }
            Ok(())
        })?);
    }

    if args.counters {
        let sweeps: Vec<SweepPoint> = complexity::sweep_ekf_predict(&[4, 8, 16, 32, 64, 128])?
            .into_iter()
            .chain(complexity::sweep_ekf_gain(&[8, 16, 32, 64, 128])?)
            .collect();
        written.push(write_sweeps(dir, &sweeps)?);
        written.push(write_run_counters(
            dir,
            results.iter().map(|r| (r.seed, r.counters.as_ref())),
        )?);
    }
    Ok(written)
}

fn write_sweeps(dir: &Path, sweeps: &[SweepPoint]) -> Result<PathBuf> {
    write_csv(dir, "counters.csv", &["routine", "dimension", "multiplies", "adds"], |w| {
        for p in sweeps {
            w.serialize((p.routine, p.dimension, p.counts.multiplies, p.counts.adds))?;
        }
        Ok(())
    })
}

fn write_run_counters<'a>(
    dir: &Path,
    runs: impl Iterator<Item = (u64, Option<&'a uavloc_core::ops::OpCounters>)>,
) -> Result<PathBuf> {
    let runs: Vec<_> = runs.collect();
    write_csv(dir, "counters_runs.csv", &["run_id", "routine", "multiplies", "adds"], |w| {
        for (seed, counters) in runs {
            if let Some(c) = counters {
                for (name, counts) in &c.routines {
                    w.serialize((seed, name, counts.multiplies, counts.adds))?;
                }
            }
        }
        Ok(())
    })
}

fn explore_invariants(cfg: &ExplorationConfig, r: &ExplorationResult) -> std::result::Result<(), String> {
    if let Some(e) = r.episodes.iter().find(|e| e.steps > cfg.mission_time) {
        return Err(format!("episode {} ran {} steps, limit {}", e.episode, e.steps, cfg.mission_time));
    }
    if r.qtable.values().iter().any(|v| !v.is_finite()) {
        return Err("non-finite Q value".into());
    }
    Ok(())
}

fn explore_summary(r: &ExplorationResult) -> String {
    let found = r.episodes.iter().filter(|e| e.found_target).count();
    let last = r.episodes.last();
    format!(
        "run {}: n_uavs={} episodes={} targets_found={} final_positive_q={:.2} map_accuracy={:.4} coverage={:.4}",
        r.seed,
        r.n_uavs,
        r.episodes.len(),
        found,
        last.map_or(0.0, |e| e.positive_q_sum),
        last.map_or(0.0, |e| e.map.accuracy),
        last.map_or(0.0, |e| e.map.coverage),
    )
}

/// Runs `args.runs` exploration missions and writes the CSV artifacts.
pub fn run_explore_batch(args: &BatchArgs) -> Result<BatchReport> {
    let cfg = load_exploration_config(&args.config)?;
    check_args(args)?;
    let opts = RunOptions { count_ops: args.counters };
    let outcomes: Vec<_> = seeds(args)
        .into_par_iter()
        .map(|seed| {
            let r = run_exploration_with(&cfg, seed, opts)
                .map_err(|e| e.to_string())
                .and_then(|r| explore_invariants(&cfg, &r).map(|_| r));
            (seed, r)
        })
        .collect();
    let mut report = BatchReport { scenario: "explore".into(), ..Default::default() };
    let results = partition(outcomes, &mut report);
    for r in &results {
        report.summaries.push(explore_summary(r));
    }
    report.summaries.sort_by_key(|s| summary_seed(s));
    if !report.success() {
        return finish(args, report, Vec::new());
    }
    let written = write_explore_outputs(args, &results)?;
    finish(args, report, written)
}

fn write_explore_outputs(args: &BatchArgs, results: &[ExplorationResult]) -> Result<Vec<PathBuf>> {
    let dir = args.out.as_path();
    let mut written = Vec::new();
    written.push(write_csv(
        dir,
        "qlearn.csv",
        &["run_id", "episode", "n_uavs", "positive_q_sum", "map_accuracy", "coverage"],
        |w| {
            for r in results {
                for e in &r.episodes {
                    w.serialize((r.seed, e.episode, r.n_uavs, e.positive_q_sum, e.map.accuracy, e.map.coverage))?;
                }
            }
            Ok(())
        },
    )?);
    written.push(write_csv(dir, "map.csv", &["run_id", "episode", "cell_x", "cell_y", "log_odds"], |w| {
        for r in results {
            for (episode, grid) in r.grids.iter().enumerate() {
                let width = grid.width();
                for (i, v) in grid.values().iter().enumerate() {
                    w.serialize((r.seed, episode, i % width, i / width, v))?;
                }
            }
        }
        Ok(())
    })?);

    if args.trace {
        written.push(write_csv(dir, "qtable.csv", &["run_id", "state", "action", "value"], |w| {
            for r in results {
                let n_actions = r.qtable.n_actions();
                for (i, q) in r.qtable.values().iter().enumerate() {
                    w.serialize((r.seed, i / n_actions, i % n_actions, q))?;
                }
            }
            Ok(())
        })?);
        written.push(write_csv(
            dir,
            "experiences.csv",
            &["run_id", "episode", "step", "uav_id", "s", "a", "r", "s_next"],
            |w| {
                for r in results {
                    for (episode, x) in &r.experiences {
                        w.serialize((r.seed, episode, x.step, x.uav_id, x.state, x.action, x.reward, x.next_state))?;
                    }
                }
                Ok(())
            },
        )?);
        written.push(write_csv(dir, "paths.csv", &["run_id", "episode", "uav_id", "step", "cell_x", "cell_y"], |w| {
            for r in results {
                for (episode, uavs) in r.paths.iter().enumerate() {
                    for (uav, path) in uavs.iter().enumerate() {
                        for (step, (cx, cy)) in path.iter().enumerate() {
                            w.serialize((r.seed, episode, uav + 1, step, cx, cy))?;
                        }
                    }
                }
            }
            Ok(())
        })?);
    }

    if args.counters {
        let sweeps: Vec<SweepPoint> = complexity::sweep_og_update(&[4.0, 8.0, 16.0, 32.0, 64.0])?
            .into_iter()
            .chain(complexity::sweep_q_update(&[4, 16, 64, 256, 1024, 4096])?)
            .collect();
        written.push(write_sweeps(dir, &sweeps)?);
        written.push(write_run_counters(dir, results.iter().map(|r| (r.seed, r.counters.as_ref())))?);
    }
    Ok(written)
}
