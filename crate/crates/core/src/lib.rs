//! Learning a classifier from unpaired input and output sequences.
//!
//! The learner never sees `(x, y)` pairs. It sees an observation sequence
//! and a Markov prior over label sequences, and it maximizes the expected
//! log-likelihood of its predicted label sequence under that prior, plus a
//! λ-weighted term that rewards predictions from which a generative model
//! can reconstruct the input.
//!
//! Modules:
//! - [`prior`]: the Markov-chain label prior (sampling, estimation, noise).
//! - [`models`]: softmax predictor and generator.
//! - [`objective`]: the unsupervised objective, supervised reference, gradients.
//! - [`data`]: the permuted Markov-chain benchmark.
//! - [`trainer`]: gradient-ascent loops with traces.
//! - [`diagnostics`]: landscape lines, singular values, permutation oracle.

// `!(x >= 0.0)` is how argument checks reject NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod matrix;
pub mod models;
pub mod objective;
pub mod prior;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use models::{GeneratorParams, InitScheme, OneHotSequence, PredictorParams};
pub use objective::{GradientPair, ObjectiveBreakdown};
pub use prior::TransitionModel;

/// Default predictor sharpness.
pub const DEFAULT_GAMMA_D: f64 = 1.0;
/// Default generator sharpness. A flat generator keeps the regularizer weak
/// until the predictor has started to separate inputs, which is what lets
/// λ = 30 escape the rank-1 trap instead of locking in a random labeling.
pub const DEFAULT_GAMMA_G: f64 = 0.03;
