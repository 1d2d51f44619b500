//! Command-line harness for the unpaired-learning experiments.

pub mod commands;
pub mod config;
pub mod files;
pub mod sweep;
pub mod workspace;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{run, Diverged};
pub use workspace::Workspace;

#[derive(Debug, Parser)]
#[command(name = "unpaired", version, about = "Learn a classifier from unpaired sequences")]
pub struct Cli {
    /// Output directory (defaults to $UNPAIRED_OUT_DIR, then ".").
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// JSON experiment config; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a benchmark dataset, an unpaired label corpus and the answer key.
    Generate(GenerateArgs),
    /// Train a predictor on observations (or on pairs with --supervised).
    Train(TrainArgs),
    /// Evaluate objectives along a line through the ground truth.
    Landscape(LandscapeArgs),
    /// Test error under a perturbed prior over a (sigma_p, lambda, seed) grid.
    SweepNoise(SweepArgs),
    /// Score every hard permutation classifier under the prior.
    Oracle(OracleArgs),
    /// Test error and rank diagnostics of a trained model.
    Eval(EvalArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct PriorArgs {
    /// Transition model JSON.
    #[arg(long, conflicts_with = "prior_from_unpaired")]
    pub prior: Option<PathBuf>,

    /// Estimate the prior from an unpaired label file.
    #[arg(long)]
    pub prior_from_unpaired: Option<PathBuf>,

    /// Additive smoothing for --prior-from-unpaired.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct TrainFlags {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Window length, or "full".
    #[arg(long)]
    pub window: Option<String>,
    #[arg(long)]
    pub gamma_d: Option<f64>,
    #[arg(long)]
    pub gamma_g: Option<f64>,
    /// Standard deviation of the Gaussian weight init.
    #[arg(long)]
    pub init_sigma: Option<f64>,
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long)]
    pub shuffle_seed: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

#[derive(Debug, Args, Default, Clone)]
pub struct DatasetFlags {
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args, Clone)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub dataset: DatasetFlags,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub unpaired_length: Option<usize>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Observation file (default: <out-dir>/observations.json).
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Train on paired data from --dataset instead.
    #[arg(long, requires = "dataset")]
    pub supervised: bool,
    /// Full dataset, read only with --supervised.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Dataset used to report test error in the trace.
    #[arg(long)]
    pub eval_dataset: Option<PathBuf>,
    #[arg(long, default_value = files::MODEL_FILE)]
    pub model_name: String,
    #[arg(long, default_value = files::TRACE_FILE)]
    pub trace_name: String,
}

#[derive(Debug, Args, Clone)]
pub struct LandscapeArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Default: <out-dir>/dataset.json.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Default: <out-dir>/answer_key.json.
    #[arg(long)]
    pub answer_key: Option<PathBuf>,
    /// Model whose predictor is the far endpoint; a random endpoint otherwise.
    #[arg(long)]
    pub endpoint: Option<PathBuf>,
    /// Model whose generator is held fixed; the ground-truth generator otherwise.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long)]
    pub lambda_star: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub random_scale: Option<f64>,
    #[arg(long)]
    pub line_seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub grid_step: Option<f64>,
    #[arg(long, default_value = files::LANDSCAPE_FILE)]
    pub output: String,
}

#[derive(Debug, Args, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub dataset: DatasetFlags,
    #[arg(long, value_delimiter = ',')]
    pub sigma_p_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = files::SWEEP_FILE)]
    pub output: String,
}

#[derive(Debug, Args, Clone)]
pub struct OracleArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Default: <out-dir>/dataset.json.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value = files::ORACLE_FILE)]
    pub output: String,
}

#[derive(Debug, Args, Clone)]
pub struct EvalArgs {
    /// Default: <out-dir>/model.json.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Default: <out-dir>/dataset.json.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}
