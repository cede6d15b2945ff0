//! Operator surface for the gait authentication stack: dataset synthesis,
//! training, evaluation, transfer, fused-decision simulation, attack
//! simulation, and timing profiles, all driven by one TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use thiserror::Error;

use gaitauth::fusion::FusionError;
use gaitauth::metric::MetricError;
use gaitauth::nn::NnError;
use gaitauth::pipeline::PipelineError;
use gaitauth::signal::SignalError;
use gaitauth::threat::ThreatError;

mod commands;
mod config;
mod data;

use config::RunConfig;

/// Exit 1: the operator asked for something malformed. Exit 2: the run
/// itself failed (I/O, divergence, numerics).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {err}")]
    Io {
        path: String,
        err: std::io::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Threat(#[from] ThreatError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gaitauth", version, about = "Gait authentication toolkit")]
struct Cli {
    /// Run configuration (TOML); built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override; wins over the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output artifacts, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Suppress summary lines; artifacts are still written.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render synthetic walker traces to CSV plus a manifest.
    Synth,
    /// Train a verifier on the configured dataset.
    Train,
    /// Threshold-sweep evaluation of a checkpoint.
    Eval {
        /// Checkpoint to score; defaults to <out>/model.gfck.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Frozen-prefix training from a source checkpoint, with an optional
    /// from-scratch baseline for comparison.
    Transfer {
        /// Source checkpoint; falls back to the config, then <out>/model.gfck.
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Simulate sequential-decision sessions and report error statistics.
    Fuse,
    /// Run the configured attack scenario against a checkpoint.
    Attack {
        /// Checkpoint to attack; defaults to <out>/model.gfck.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Measure forward/backward/epoch timings on this machine.
    Profile,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    let quiet = cli.quiet;
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg, out, quiet),
        Command::Train => commands::cmd_train(&cfg, out, quiet),
        Command::Eval { checkpoint } => commands::cmd_eval(&cfg, out, quiet, checkpoint),
        Command::Transfer { source } => commands::cmd_transfer(&cfg, out, quiet, source),
        Command::Fuse => commands::cmd_fuse(&cfg, out, quiet),
        Command::Attack { checkpoint } => commands::cmd_attack(&cfg, out, quiet, checkpoint),
        Command::Profile => commands::cmd_profile(&cfg, out, quiet),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
