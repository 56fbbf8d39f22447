//! Experiment driver: data preparation, training, calibration, evaluation
//! reports, plots and significance tests.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use uqseq::models::Variant;

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "uqseq", version, about = "Uncertainty bands for sequence-to-sequence regression")]
pub struct Args {
    /// JSON experiment configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// jms, jma, wbms, bbms, jmv, doms or constant.
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Checkpoint to write (train) or read (evaluate, calibrate).
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Also evaluate the test split with no observed decoder steps.
    #[arg(long, global = true)]
    pub drift: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Standardize and partition the dataset.
    Prepare,
    /// Train the selected variant and write a checkpoint.
    Train,
    /// Predict, calibrate and write report tables.
    Evaluate,
    /// Fit calibration scales on the calibration split.
    Calibrate,
    /// Draw saved predictions as SVG.
    Plot,
    /// Paired permutation test of the selected variant against others.
    Permtest {
        #[arg(required = true)]
        against: Vec<Variant>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Calibrate => "calibrate",
            Command::Plot => "plot",
            Command::Permtest { .. } => "permtest",
        }
    }
}

pub fn resolve_config(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(v) = args.variant {
        config.variant = v;
    }
    if let Some(o) = &args.out {
        config.out = o.clone();
    }
    config.validate()?;
    Ok(config)
}

pub fn run(args: &Args) -> Result<(), CliError> {
    let config = resolve_config(args)?;
    let _lock = commands::OutputLock::acquire(&config.out)?;
    commands::write_effective_config(&config, args.command.name())?;
    let checkpoint = args.checkpoint.as_deref();
    match &args.command {
        Command::Prepare => commands::cmd_prepare(&config).map(drop),
        Command::Train => commands::cmd_train(&config, checkpoint).map(drop),
        Command::Evaluate => commands::cmd_evaluate(&config, checkpoint, args.drift).map(drop),
        Command::Calibrate => commands::cmd_calibrate(&config, checkpoint).map(drop),
        Command::Plot => commands::cmd_plot(&config).map(drop),
        Command::Permtest { against } => commands::cmd_permtest(&config, against, args.drift).map(drop),
    }
}
