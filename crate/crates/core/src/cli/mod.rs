//! Command-line front end: `train`, `quantize`, `simulate` and `perf`.

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use commands::{
    cmd_perf, cmd_quantize, cmd_simulate, cmd_train, load_splits, BitsRow, QuantizeSummary,
    SimulateSummary, TrainSummary,
};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "psnn", version, about = "Probabilistic SNN training, quantization, core simulation and performance model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Train a floating-point model with the first-to-spike objective.
    Train(TrainArgs),
    /// Quantize a trained model over a sweep of synapse widths.
    Quantize(QuantizeArgs),
    /// Run first-to-spike inference on a split with one engine.
    Simulate(SimulateArgs),
    /// Evaluate the performance model.
    Perf(PerfArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Digits,
    Har,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "digits")]
    pub dataset: DatasetKind,
    /// Dataset directory (defaults to data/digits or data/har).
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Cap on training samples.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Cap on test samples (defaults to --limit).
    #[arg(long)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    /// Presentation time (steps per sample).
    #[arg(long = "T", default_value_t = 8)]
    pub presentation_time: usize,
    /// Spike-integration window.
    #[arg(long, default_value_t = 8)]
    pub tau: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct QuantizeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Floating-point model artifact.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "5,6,7,8")]
    pub bits: Vec<u32>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Float or quantized model artifact.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Synapse width used when the artifact holds a floating-point model.
    #[arg(long, default_value_t = 8)]
    pub bits: u32,
    /// Inference engine (float, quantized, core).
    #[arg(long, default_value = "core")]
    pub engine: String,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerfArgs {
    /// TOML configuration; the built-in calibrated one when omitted.
    #[arg(long)]
    pub perf_config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the built-in configuration to this path.
    #[arg(long)]
    pub write_config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, true).map(|_| ()),
        Command::Quantize(a) => cmd_quantize(&a).map(|s| {
            for r in &s.rows {
                println!("b={}: accuracy {:.4} (float {:.4})", r.bits, r.accuracy, s.float_accuracy);
            }
        }),
        Command::Simulate(a) => cmd_simulate(&a).map(|s| {
            println!(
                "{} engine: {} samples, accuracy {:.4}, CDF(4) {:.4}",
                s.engine, s.samples, s.accuracy, s.cdf_at_4
            );
        }),
        Command::Perf(a) => cmd_perf(&a).map(|r| print!("{}", r.text_table())),
    }
}
