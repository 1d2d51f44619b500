//! Gradient-ascent training loops.
//!
//! Steps are `W += lr · ∇ / n`, where `n` is the number of positions the
//! gradient was computed over, so the learning rate does not need retuning
//! when the sequence length changes. Reported objective values are the
//! un-normalized sums over the training sequence.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::data::sub_seed;
use crate::diagnostics::{rank1_score, test_error};
use crate::error::Error;
use crate::matrix::Matrix;
use crate::models::{init_params, GeneratorParams, InitScheme, OneHotSequence, PredictorParams};
use crate::objective::{PairCounts, SequenceStats, UnsupervisedProblem};
use crate::prior::TransitionModel;

const GENERATOR_INIT_SALT: u64 = 0x0067_656e;

/// Positions per gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Full,
    Length(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub window: Window,
    pub gamma_d: f64,
    pub gamma_g: f64,
    pub init_scheme: InitScheme,
    pub generator_init_scheme: InitScheme,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub eval_every: usize,
}

pub const DEFAULT_WINDOW_LENGTH: usize = 200;

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 30.0,
            learning_rate: 0.1,
            epochs: 2000,
            window: Window::Full,
            gamma_d: crate::DEFAULT_GAMMA_D,
            gamma_g: crate::DEFAULT_GAMMA_G,
            init_scheme: InitScheme::default(),
            generator_init_scheme: InitScheme::default(),
            init_seed: 0,
            shuffle_seed: 0,
            eval_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and nonnegative, got {}", self.lambda));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be nonnegative, got {}", self.learning_rate));
        }
        if self.epochs == 0 || self.eval_every == 0 {
            return bad("epochs and eval_every must be positive".into());
        }
        if let Window::Length(0) = self.window {
            return bad("window length must be positive".into());
        }
        for (name, g) in [("gamma_d", self.gamma_d), ("gamma_g", self.gamma_g)] {
            if !(g > 0.0 && g.is_finite()) {
                return bad(format!("{name} must be positive, got {g}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub fitness: f64,
    pub regularization: f64,
    pub total: f64,
    pub test_error: f64,
    pub rank1_score: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

pub const TRACE_HEADER: &str = "epoch,fitness,regularization,total,test_error,rank1_score,grad_norm";

impl TrainTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.epoch, r.fitness, r.regularization, r.total, r.test_error, r.rank1_score, r.grad_norm
            );
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Invalid(#[from] Error),

    /// The objective or the weights became non-finite. `trace` holds every
    /// row recorded before that happened.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, trace: TrainTrace },
}

/// Paired data used only to report test error in the trace.
pub type EvalPairs<'a> = (&'a OneHotSequence, &'a OneHotSequence);

fn window_bounds(len: usize, window: Window) -> Vec<(usize, usize)> {
    match window {
        Window::Full => vec![(0, len)],
        Window::Length(w) => (0..len)
            .step_by(w)
            .map(|s| (s, (s + w).min(len)))
            .collect(),
    }
}

fn should_record(epoch: usize, epochs: usize, every: usize) -> bool {
    epoch.is_multiple_of(every) || epoch == epochs
}

fn rank1_or_nan(w: &Matrix) -> f64 {
    rank1_score(w).unwrap_or(f64::NAN)
}

fn eval_error(predictor: &PredictorParams, eval: Option<EvalPairs<'_>>) -> Result<f64, Error> {
    match eval {
        Some((x, y)) => test_error(predictor, x, y),
        None => Ok(f64::NAN),
    }
}

/// Gradient ascent on `fitness + λ · regularization` over `observations`.
pub fn train_unsupervised(
    config: &TrainConfig,
    observations: &OneHotSequence,
    prior: &TransitionModel,
    eval: Option<EvalPairs<'_>>,
) -> Result<(PredictorParams, GeneratorParams, TrainTrace), TrainError> {
    config.validate()?;
    if observations.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 observations".into()).into());
    }
    let c = prior.num_classes();
    let m = observations.dimension();
    let mut predictor = PredictorParams::new(
        init_params(c, m, &config.init_scheme, config.init_seed)?,
        config.gamma_d,
    )?;
    let mut generator = GeneratorParams::new(
        init_params(
            m,
            c,
            &config.generator_init_scheme,
            sub_seed(config.init_seed, GENERATOR_INIT_SALT),
        )?,
        config.gamma_g,
    )?;

    let full = UnsupervisedProblem::new(observations, prior)?;
    let windows: Vec<UnsupervisedProblem<'_>> = match config.window {
        Window::Full => Vec::new(),
        w => window_bounds(observations.len(), w)
            .into_iter()
            .map(|(s, e)| {
                SequenceStats::from_indices(&observations.indices()[s..e], m)
                    .and_then(|st| UnsupervisedProblem::from_stats(st, prior))
            })
            .collect::<Result<_, _>>()?,
    };
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let n_full = observations.len() as f64;
    let mut trace = TrainTrace::default();

    for epoch in 0..=config.epochs {
        let full_batch_step = config.window == Window::Full && epoch < config.epochs;
        let record = should_record(epoch, config.epochs, config.eval_every);
        if record || full_batch_step {
            let (b, g) = full.gradient(&predictor, &generator, config.lambda)?;
            if !b.total.is_finite() || !predictor.weights.is_finite() || !generator.weights.is_finite() {
                return Err(TrainError::Diverged { epoch, trace });
            }
            if record {
                trace.rows.push(TraceRow {
                    epoch,
                    fitness: b.fitness,
                    regularization: b.regularization,
                    total: b.total,
                    test_error: eval_error(&predictor, eval)?,
                    rank1_score: rank1_or_nan(&predictor.weights),
                    grad_norm: g.norm(),
                });
            }
            if full_batch_step {
                let step = config.learning_rate / n_full;
                predictor.weights.add_scaled(&g.d_predictor, step);
                generator.weights.add_scaled(&g.d_generator, step);
            }
        }
        if epoch == config.epochs || config.window == Window::Full {
            continue;
        }
        order.shuffle(&mut shuffle_rng);
        for &k in &order {
            let problem = &windows[k];
            let (_, g) = problem.gradient(&predictor, &generator, config.lambda)?;
            let step = config.learning_rate / problem.stats().len as f64;
            predictor.weights.add_scaled(&g.d_predictor, step);
            generator.weights.add_scaled(&g.d_generator, step);
        }
    }
    Ok((predictor, generator, trace))
}

/// Gradient ascent on `Σ_t ln q_t(y_t)`.
///
/// Trace rows carry the log-likelihood in both `fitness` and `total`,
/// zero regularization, and the error on `eval` (or on the training pairs
/// when `eval` is `None`).
pub fn train_supervised(
    config: &TrainConfig,
    inputs: &OneHotSequence,
    labels: &OneHotSequence,
    eval: Option<EvalPairs<'_>>,
) -> Result<(PredictorParams, TrainTrace), TrainError> {
    config.validate()?;
    let full = PairCounts::new(inputs, labels)?;
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("need at least 1 training pair".into()).into());
    }
    let mut predictor = PredictorParams::new(
        init_params(labels.dimension(), inputs.dimension(), &config.init_scheme, config.init_seed)?,
        config.gamma_d,
    )?;
    let windows: Vec<PairCounts> = match config.window {
        Window::Full => Vec::new(),
        w => window_bounds(inputs.len(), w)
            .into_iter()
            .map(|(s, e)| PairCounts::new(&inputs.slice(s, e), &labels.slice(s, e)))
            .collect::<Result<_, _>>()?,
    };
    let eval = eval.unwrap_or((inputs, labels));
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut trace = TrainTrace::default();

    for epoch in 0..=config.epochs {
        let full_batch_step = config.window == Window::Full && epoch < config.epochs;
        let record = should_record(epoch, config.epochs, config.eval_every);
        if record || full_batch_step {
            let (value, grad) = full.gradient(&predictor)?;
            if !value.is_finite() || !predictor.weights.is_finite() {
                return Err(TrainError::Diverged { epoch, trace });
            }
            if record {
                trace.rows.push(TraceRow {
                    epoch,
                    fitness: value,
                    regularization: 0.0,
                    total: value,
                    test_error: eval_error(&predictor, Some(eval))?,
                    rank1_score: rank1_or_nan(&predictor.weights),
                    grad_norm: grad.frobenius_norm(),
                });
            }
            if full_batch_step {
                predictor
                    .weights
                    .add_scaled(&grad, config.learning_rate / full.len as f64);
            }
        }
        if epoch == config.epochs || config.window == Window::Full {
            continue;
        }
        order.shuffle(&mut shuffle_rng);
        for &k in &order {
            let (_, grad) = windows[k].gradient(&predictor)?;
            predictor
                .weights
                .add_scaled(&grad, config.learning_rate / windows[k].len as f64);
        }
    }
    Ok((predictor, trace))
}
