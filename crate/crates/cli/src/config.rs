//! Experiment configuration. Defaults, then an optional JSON config file,
//! then command-line flags.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use unpaired::data::{DEFAULT_LENGTH, DEFAULT_TRAIN_FRACTION, DEFAULT_UNPAIRED_LENGTH};
use unpaired::prior::TransitionModelJson;
use unpaired::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSource {
    /// The shipped Dirichlet benchmark prior.
    #[default]
    Default,
    Inline { model: TransitionModelJson },
    File { path: PathBuf },
    /// Count-based estimate from an unpaired label file.
    EstimateFromUnpaired { path: PathBuf, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub length: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub unpaired_length: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            length: DEFAULT_LENGTH,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
            unpaired_length: DEFAULT_UNPAIRED_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub sigma_p_grid: Vec<f64>,
    pub lambda_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigma_p_grid: vec![0.0, 0.1, 0.3],
            lambda_grid: vec![1.0, 30.0, 100.0],
            seeds: (0..5).collect(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeConfig {
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_step: f64,
    /// λ of the regularized curve.
    pub lambda_star: f64,
    /// Weight of the ground-truth routing matrix.
    pub kappa: f64,
    pub random_scale: f64,
    pub line_seed: u64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            grid_min: -0.5,
            grid_max: 1.5,
            grid_step: 0.02,
            lambda_star: 30.0,
            kappa: 5.0,
            random_scale: 5.0,
            line_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub prior: PriorSource,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub landscape: LandscapeConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(!self.sweep.sigma_p_grid.is_empty(), "sigma_p grid is empty");
        anyhow::ensure!(!self.sweep.lambda_grid.is_empty(), "lambda grid is empty");
        anyhow::ensure!(!self.sweep.seeds.is_empty(), "seed list is empty");
        let mut seeds = self.sweep.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        anyhow::ensure!(seeds.len() == self.sweep.seeds.len(), "sweep seeds must be distinct");
        anyhow::ensure!(self.sweep.jobs >= 1, "jobs must be at least 1");
        self.train.validate()?;
        Ok(())
    }
}
