use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uavloc_cli::{run_explore_batch, run_track_batch, BatchArgs, BatchReport};

#[derive(Parser)]
#[command(name = "uavloc", version, about = "Multi-UAV target localization and exploration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cooperative range-only tracking of a moving target.
    Track(Common),
    /// Multi-UAV Q-learning exploration of an indoor map.
    Explore(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; an empty file uses the defaults.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// First seed; run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Write operation-count CSVs.
    #[arg(long)]
    counters: bool,
    /// Write per-step trace CSVs.
    #[arg(long)]
    trace: bool,
}

impl From<Common> for BatchArgs {
    fn from(c: Common) -> Self {
        BatchArgs { config: c.config, runs: c.runs, seed: c.seed, out: c.out, counters: c.counters, trace: c.trace }
    }
}

fn report(r: anyhow::Result<BatchReport>) -> ExitCode {
    match r {
        Ok(rep) => {
            for line in &rep.summaries {
                println!("{line}");
            }
            if rep.success() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {} of {} runs failed; see manifest.json", rep.failed.len(), rep.failed.len() + rep.completed.len());
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Track(c) => report(run_track_batch(&c.into())),
        Command::Explore(c) => report(run_explore_batch(&c.into())),
    }
}
