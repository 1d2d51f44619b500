//! Sharpened softmax linear models.
//!
//! The predictor maps an input index `m` to `softmax(γ_d · W_d[:, m])` over
//! the C classes; the generator maps a class `j` to
//! `softmax(γ_g · W_g[:, j])` over the M input symbols. Inputs and labels are
//! one-hot, so both models are addressed by index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A sequence of one-hot vectors stored by their hot index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotSequence {
    indices: Vec<usize>,
    dimension: usize,
}

impl OneHotSequence {
    pub fn new(indices: Vec<usize>, dimension: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= dimension) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                dim: dimension,
            });
        }
        Ok(Self { indices, dimension })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Contiguous sub-sequence `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> OneHotSequence {
        OneHotSequence {
            indices: self.indices[start..end].to_vec(),
            dimension: self.dimension,
        }
    }
}

/// Discriminative model weights `W_d` (C×M) and sharpness `γ_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorParams {
    pub weights: Matrix,
    pub sharpness: f64,
}

/// Generative model weights `W_g` (M×C) and sharpness `γ_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub weights: Matrix,
    pub sharpness: f64,
}

fn check_sharpness(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "sharpness must be positive and finite, got {gamma}"
        )))
    }
}

fn check_weights(w: &Matrix) -> Result<()> {
    if w.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("weights must be finite".into()))
    }
}

impl PredictorParams {
    pub fn new(weights: Matrix, sharpness: f64) -> Result<Self> {
        check_sharpness(sharpness)?;
        check_weights(&weights)?;
        Ok(Self { weights, sharpness })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_inputs(&self) -> usize {
        self.weights.cols()
    }

    /// `q = softmax(γ_d · W_d[:, input])`.
    pub fn predict_dist(&self, input: usize) -> Result<Vec<f64>> {
        if input >= self.num_inputs() {
            return Err(Error::IndexOutOfRange {
                index: input,
                dim: self.num_inputs(),
            });
        }
        Ok(softmax(&self.weights.column(input), self.sharpness))
    }

    /// All predictive distributions as a C×M matrix, column `m` = q for input `m`.
    pub fn predict_table(&self) -> Matrix {
        let mut table = Matrix::zeros(self.num_classes(), self.num_inputs());
        for m in 0..self.num_inputs() {
            table.set_column(m, &softmax(&self.weights.column(m), self.sharpness));
        }
        table
    }

    /// Most probable class for `input`, ties to the lowest index.
    pub fn predict_class(&self, input: usize) -> Result<usize> {
        Ok(argmax(&self.predict_dist(input)?))
    }
}

impl GeneratorParams {
    pub fn new(weights: Matrix, sharpness: f64) -> Result<Self> {
        check_sharpness(sharpness)?;
        check_weights(&weights)?;
        Ok(Self { weights, sharpness })
    }

    pub fn num_inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }

    /// `ln softmax(γ_g · W_g[:, label])`, evaluated as `z - logsumexp(z)`.
    pub fn generate_log_dist(&self, label: usize) -> Result<Vec<f64>> {
        if label >= self.num_classes() {
            return Err(Error::IndexOutOfRange {
                index: label,
                dim: self.num_classes(),
            });
        }
        Ok(log_softmax(&self.weights.column(label), self.sharpness))
    }

    /// M×C table, entry `(m, j)` = `ln p(x = m | y = j)`.
    pub fn log_table(&self) -> Matrix {
        let mut table = Matrix::zeros(self.num_inputs(), self.num_classes());
        for j in 0..self.num_classes() {
            table.set_column(j, &log_softmax(&self.weights.column(j), self.sharpness));
        }
        table
    }
}

pub(crate) fn softmax(logits: &[f64], gamma: f64) -> Vec<f64> {
    let max = logits.iter().map(|z| gamma * z).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (gamma * z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(crate) fn log_softmax(logits: &[f64], gamma: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|z| gamma * z).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scaled.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    scaled.into_iter().map(|z| z - lse).collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Weight initialization scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    Gaussian { sigma: f64 },
    Zeros,
    /// `scale · R` where `R[perm[c]][c] = 1`, i.e. column `c` is hot at row
    /// `perm[c]`.
    Permutation { perm: Vec<usize>, scale: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Gaussian { sigma: 0.1 }
    }
}

pub fn init_params(rows: usize, cols: usize, scheme: &InitScheme, seed: u64) -> Result<Matrix> {
    match scheme {
        InitScheme::Zeros => Ok(Matrix::zeros(rows, cols)),
        InitScheme::Gaussian { sigma } => {
            let normal =
                Normal::new(0.0, *sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(Matrix::from_fn(rows, cols, |_, _| normal.sample(&mut rng)))
        }
        InitScheme::Permutation { perm, scale } => {
            if perm.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "permutation length",
                    expected: cols,
                    got: perm.len(),
                });
            }
            let mut m = Matrix::zeros(rows, cols);
            for (c, &r) in perm.iter().enumerate() {
                if r >= rows {
                    return Err(Error::IndexOutOfRange { index: r, dim: rows });
                }
                m[(r, c)] = *scale;
            }
            Ok(m)
        }
    }
}

/// On-disk form of a weight matrix: `{"rows", "cols", "data" (row-major), "sharpness"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub sharpness: f64,
}

impl WeightsJson {
    pub fn from_parts(weights: &Matrix, sharpness: f64) -> Self {
        Self {
            rows: weights.rows(),
            cols: weights.cols(),
            data: weights.as_slice().to_vec(),
            sharpness,
        }
    }

    pub fn to_predictor(&self) -> Result<PredictorParams> {
        PredictorParams::new(
            Matrix::from_row_major(self.rows, self.cols, self.data.clone())?,
            self.sharpness,
        )
    }

    pub fn to_generator(&self) -> Result<GeneratorParams> {
        GeneratorParams::new(
            Matrix::from_row_major(self.rows, self.cols, self.data.clone())?,
            self.sharpness,
        )
    }
}

impl From<&PredictorParams> for WeightsJson {
    fn from(p: &PredictorParams) -> Self {
        Self::from_parts(&p.weights, p.sharpness)
    }
}

impl From<&GeneratorParams> for WeightsJson {
    fn from(p: &GeneratorParams) -> Self {
        Self::from_parts(&p.weights, p.sharpness)
    }
}
