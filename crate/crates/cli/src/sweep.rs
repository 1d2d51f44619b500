//! The prior-noise sweep: perturb the prior, train, record test error.

use rayon::prelude::*;
use unpaired::data::{make_dataset, sub_seed};
use unpaired::diagnostics::{rank1_score, test_error};
use unpaired::trainer::train_unsupervised;
use unpaired::TransitionModel;

use crate::config::ExperimentConfig;

pub const SWEEP_HEADER: &str = "sigma_p,lambda,seed,test_error,rank1_score";

/// Written in place of both metrics when a cell fails.
pub const FAILED_SENTINEL: f64 = -1.0;

// The perturbation stream depends on the seed only, so every λ at a given
// (σ_P, seed) trains against the same noisy prior.
const PERTURB_SALT: u64 = 0x006e_6f69_7365;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub sigma_p: f64,
    pub lambda: f64,
    pub seed: u64,
    pub test_error: f64,
    pub rank1_score: f64,
    /// Why the cell failed, if it did.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.sigma_p, r.lambda, r.seed, r.test_error, r.rank1_score
            ));
        }
        out
    }

    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.failure.is_some()).count()
    }

    /// Mean test error over seeds for one (σ_P, λ), skipping failed cells.
    pub fn mean_error(&self, sigma_p: f64, lambda: f64) -> Option<f64> {
        let errs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.sigma_p == sigma_p && r.lambda == lambda && r.failure.is_none())
            .map(|r| r.test_error)
            .collect();
        (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
    }

    /// Lowest mean test error over λ at a given σ_P, with the λ achieving it.
    pub fn best_lambda(&self, sigma_p: f64) -> Option<(f64, f64)> {
        let mut lambdas: Vec<f64> = self.rows.iter().map(|r| r.lambda).collect();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        lambdas
            .into_iter()
            .filter_map(|l| self.mean_error(sigma_p, l).map(|m| (l, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn summary(&self) -> Vec<String> {
        let mut sigmas: Vec<f64> = self.rows.iter().map(|r| r.sigma_p).collect();
        sigmas.sort_by(f64::total_cmp);
        sigmas.dedup();
        let mut lines = Vec::new();
        for s in sigmas {
            if let Some((l, m)) = self.best_lambda(s) {
                lines.push(format!("sigma_p {s}: best lambda {l}, mean test error {m:.4}"));
            }
        }
        for r in self.rows.iter().filter(|r| r.failure.is_some()) {
            lines.push(format!(
                "FAILED sigma_p {} lambda {} seed {}: {}",
                r.sigma_p,
                r.lambda,
                r.seed,
                r.failure.as_deref().unwrap_or("")
            ));
        }
        lines
    }
}

fn run_cell(
    prior: &TransitionModel,
    config: &ExperimentConfig,
    sigma_p: f64,
    lambda: f64,
    seed: u64,
) -> Result<(f64, f64), String> {
    let d = &config.dataset;
    let dataset =
        make_dataset(prior, d.length, d.train_fraction, seed).map_err(|e| e.to_string())?;
    let noisy = prior
        .perturb(sigma_p, sub_seed(seed, PERTURB_SALT))
        .map_err(|e| e.to_string())?;
    let mut train = config.train.clone();
    train.lambda = lambda;
    train.init_seed = seed;
    // Only the final parameters are needed.
    train.eval_every = train.epochs;
    let (predictor, _, _) = train_unsupervised(&train, &dataset.train_observations(), &noisy, None)
        .map_err(|e| e.to_string())?;
    let (x, y) = dataset.test_pairs();
    let err = test_error(&predictor, &x, &y).map_err(|e| e.to_string())?;
    let rank1 = rank1_score(&predictor.weights).map_err(|e| e.to_string())?;
    Ok((err, rank1))
}

/// Runs every (σ_P, λ, seed) cell on a pool of `config.sweep.jobs` threads.
/// Rows come back sorted by σ_P, then λ, then seed.
pub fn run_noise_sweep(
    prior: &TransitionModel,
    config: &ExperimentConfig,
) -> anyhow::Result<SweepResult> {
    let s = &config.sweep;
    let mut sigmas = s.sigma_p_grid.clone();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let mut lambdas = s.lambda_grid.clone();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let mut seeds = s.seeds.clone();
    seeds.sort_unstable();

    let cells: Vec<(f64, f64, u64)> = sigmas
        .iter()
        .flat_map(|&sp| {
            let seeds = &seeds;
            lambdas
                .iter()
                .flat_map(move |&l| seeds.iter().map(move |&seed| (sp, l, seed)))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new().num_threads(s.jobs).build()?;
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(sigma_p, lambda, seed)| {
                let outcome = run_cell(prior, config, sigma_p, lambda, seed);
                let (test_error, rank1_score, failure) = match outcome {
                    Ok((e, r)) => (e, r, None),
                    Err(msg) => (FAILED_SENTINEL, FAILED_SENTINEL, Some(msg)),
                };
                SweepRow { sigma_p, lambda, seed, test_error, rank1_score, failure }
            })
            .collect()
    });
    Ok(SweepResult { rows })
}
