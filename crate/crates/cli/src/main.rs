mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Motion prediction with static and dynamic spatiotemporal graph convolutions.
#[derive(Debug, Parser)]
#[command(name = "stgc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `section.key=value` config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set model.channels=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "stgc-out")]
    out: PathBuf,
    /// Seeds model init, shuffling, data synthesis and bench inputs.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic sequences and a manifest.
    Synth(Common),
    /// Train a model; writes a checkpoint and `loss.csv`.
    Train(Common),
    /// Per-horizon test error of a checkpoint, an untrained model or the
    /// zero-velocity baseline.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with = "checkpoint")]
        zero_velocity: bool,
    },
    /// Factorization, equivalence and constraint suites; nonzero exit on failure.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Seeded instances per identity suite.
        #[arg(long, default_value_t = 100)]
        instances: u64,
    },
    /// Per-unit and total parameter counts. Any of the shape flags selects
    /// the single-branch comparison layout.
    Params {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long = "J")]
        joints: Option<usize>,
        #[arg(long = "T")]
        frames: Option<usize>,
        #[arg(long = "C")]
        channels: Option<usize>,
        /// Total units, encode and decode included.
        #[arg(long)]
        units: Option<usize>,
    },
    /// Forward-time scaling of STS and DSTD units; writes `bench.csv`.
    Bench(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
