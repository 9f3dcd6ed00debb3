//! Subcommands of the `dewp` binary.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

/// Failure of a command, classified for the process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dewp_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for data problems, 4 for numeric aborts.
    pub fn exit_code(&self) -> u8 {
        use dewp_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::ConfigMismatch(_)) => 2,
            CliError::Core(E::NonFinite(_)) => 4,
            CliError::Core(_) | CliError::Io { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dewp", version, about = "Deep expansion learning for wind power forecasting")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed` (and every sweep seed list).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output path of the command's main artifact.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Configuration override, `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raw CSV → normalized hourly dataset bundle.
    Preprocess {
        /// Raw CSV; defaults to `data.raw_csv`.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Trains a model on a bundle; writes a checkpoint and a training report.
    Train {
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Rolling-origin evaluation of a checkpoint on a bundle's test range.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Forecasts `H` hours after `--origin` from recent raw records.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// First forecast hour, e.g. 2016-08-01T00:00:00.
        #[arg(long)]
        origin: String,
    },
    /// Trains and evaluates every grid cell for every seed.
    Sweep {
        #[arg(long)]
        bundle: PathBuf,
        /// `section.key=v1,v2,...`; repeat for a cartesian product.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
    },
}

/// Parses the configuration and runs the chosen subcommand.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.common.overrides.clone();
    if let Some(seed) = cli.common.seed {
        overrides.push(format!("train.seed={seed}"));
        overrides.push(format!("sweep.seeds=[{seed}]"));
    }
    let cfg = RunConfig::load(cli.common.config.as_deref(), &overrides)?;
    let out = cli.common.out.as_deref();
    match &cli.command {
        Command::Preprocess { raw } => commands::preprocess(&cfg, raw.as_deref(), out),
        Command::Train { bundle } => commands::train(&cfg, bundle, out),
        Command::Evaluate { bundle, checkpoint } => commands::evaluate(&cfg, bundle, checkpoint, out),
        Command::Predict {
            checkpoint,
            csv,
            origin,
        } => commands::predict(&cfg, checkpoint, csv, origin, out),
        Command::Sweep { bundle, grid } => commands::sweep(&cfg, cli.common.config.as_deref(), &overrides, bundle, grid, out),
    }
}
