//! `timbre`: scan, preprocess, train, evaluate, ablate and export attention.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use timbre_core::trainer::TrainError;

use crate::config::{ModelArg, Overrides, RunConfig, Settings};

/// Bad invocation or configuration; exits with status 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Missing or unusable inputs; exits with status 2.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("no usable samples under {0}")]
    EmptyDataset(PathBuf),
    #[error("missing split manifest {0}; run `timbre scan` first")]
    MissingManifest(PathBuf),
    #[error("missing feature cache {0}; run `timbre preprocess` first")]
    MissingCache(PathBuf),
    #[error("missing checkpoint {0}; run `timbre train` first or pass --checkpoint")]
    MissingCheckpoint(PathBuf),
    #[error("no cached sample named {0:?}")]
    UnknownSample(String),
}

#[derive(Debug, Parser)]
#[command(name = "timbre", version, about = "Instrument timbre classification from log-mel patches")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for manifests, caches and results [default: $TIMBRE_WORK_DIR or ./work].
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Corpus root directory.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    model: Option<ModelArg>,
    /// Attention heads; must divide 128.
    #[arg(long, global = true)]
    heads: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    patience: Option<usize>,
    /// Worker threads for feature extraction and evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label the corpus, split it and write the manifest.
    Scan,
    /// Extract, normalize and cache features for every split.
    Preprocess,
    /// Train one model; writes the best checkpoint and a training log.
    Train,
    /// Score a checkpoint on a split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Train and compare attention with 1, 8 and 16 heads and the FC baseline.
    Ablate,
    /// Export attention maps for one cached sample.
    Attend {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Sample file name, with or without directory and extension.
        #[arg(long)]
        sample: String,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(TrainError::NonFiniteLoss { .. }) = cause.downcast_ref::<TrainError>() {
            return 3;
        }
    }
    2
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(UsageError("--jobs must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags = Overrides {
        root: cli.root,
        work_dir: cli.work_dir,
        seed: cli.seed,
        model: cli.model,
        heads: cli.heads,
        epochs: cli.epochs,
        patience: cli.patience,
    };
    let env_dir = std::env::var_os("TIMBRE_WORK_DIR").map(PathBuf::from);
    let settings = Settings::resolve(file, flags, env_dir)?;
    match cli.command {
        Command::Scan => commands::scan(&settings),
        Command::Preprocess => commands::preprocess(&settings),
        Command::Train => commands::train(&settings),
        Command::Eval { checkpoint, split } => commands::eval(&settings, checkpoint, &split),
        Command::Ablate => commands::ablate(&settings),
        Command::Attend { checkpoint, sample } => commands::attend(&settings, checkpoint, &sample),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
