use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use titv_core::model::{Task, Variant};
use titv_core::optim::OptimizerKind;
use titv_core::train::{Monitor, SplitName};

/// Train, evaluate and interpret time-invariant / time-variant
/// feature-importance models on windowed time series.
///
/// Results go to stdout as a human-readable summary followed by stable
/// `key=value` lines; progress goes to stderr. Exit status: 0 success,
/// 2 invalid input or configuration, 3 runtime or numerical failure.
#[derive(Debug, Parser)]
#[command(name = "titv", version)]
pub struct Cli {
    /// Seed for initialization, shuffling and splitting (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for outputs [default: .]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Worker threads; results do not depend on it [default: 1]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted feature schedules.
    Synth(SynthArgs),
    /// Build a dataset from raw event and label CSV files.
    Ingest(IngestArgs),
    /// Train a model and write its checkpoint and epoch log.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset.
    Evaluate(EvaluateArgs),
    /// Export feature importance for one sample or one feature.
    Interpret(InterpretArgs),
    /// Run the built-in invariant suites.
    Verify(VerifyArgs),
    /// Fit logistic regression baselines.
    Baseline(BaselineArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Dataset path [default: <out-dir>/<run-id>.titv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV with columns entity_id,timestamp,feature,value.
    #[arg(long)]
    pub events: PathBuf,
    /// CSV with columns entity_id,window_start,label.
    #[arg(long)]
    pub labels: PathBuf,
    /// Feature window length in seconds.
    #[arg(long)]
    pub feature_window: i64,
    /// Window length in seconds; must divide the feature window.
    #[arg(long)]
    pub window: i64,
    /// Comma-separated feature order [default: sorted names seen in events]
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long, default_value = "classification")]
    pub task: Task,
    /// Dataset path [default: <out-dir>/<run-id>.titv]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file.
    #[arg(long)]
    pub data: PathBuf,
    /// full, invariant-only or variant-only.
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub rnn_dim: Option<usize>,
    #[arg(long)]
    pub film_dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs; 0 disables early stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// sgd or adam.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    /// val_auc or val_loss [default: val_auc for classification, val_loss for regression]
    #[arg(long)]
    pub monitor: Option<Monitor>,
    #[arg(long)]
    pub pos_weight: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: SplitName,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Patient,
    Feature,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct InterpretArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Sample id (patient mode).
    #[arg(long)]
    pub sample: Option<String>,
    /// Comma-separated feature names (patient mode) [default: all]
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    /// Feature name (feature mode).
    #[arg(long)]
    pub feature: Option<String>,
    /// Samples summarized in feature mode: train, val, test or all.
    #[arg(long, default_value = "test")]
    pub split: SplitName,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Also export every sample's FI series (feature mode).
    #[arg(long)]
    pub points: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    /// Analytic gradients against central finite differences.
    Gradcheck,
    /// Prediction reconstruction from feature importance, and the FiLM
    /// identity reduction.
    Identity,
    /// Planted-schedule recovery by per-window logistic regression.
    Oracle,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub scope: Scope,
    /// Override the number of random trials per suite.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
}
