//! The unsupervised objective and its gradients.
//!
//! With an order-1 Markov prior and predictions that are conditionally
//! independent given the inputs, the expected sequence log-likelihood of the
//! predicted labels reduces exactly to
//!
//! ```text
//! fitness = q_1ᵀ ln π + Σ_{t≥2} q_tᵀ (ln P) q_{t−1}
//! ```
//!
//! where `q_t` is the predictor's distribution at input `x_t`. The
//! regularizer is `Σ_t Σ_j q_t(j) ln p(x_t | y = j)` and the total is
//! `fitness + λ · regularization`.
//!
//! Inputs are one-hot, so `q_t` depends only on the input index. Both terms
//! and their gradients are therefore evaluated from [`SequenceStats`]: the
//! first index plus unigram and bigram counts. This is exact, not an
//! approximation.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{log_softmax, GeneratorParams, OneHotSequence, PredictorParams};
use crate::prior::TransitionModel;

/// Sufficient statistics of an input index sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStats {
    pub dimension: usize,
    pub len: usize,
    pub first: usize,
    /// `unigram[m]` = number of positions with input `m`.
    pub unigram: Vec<f64>,
    /// `bigram[(a, b)]` = number of `t ≥ 2` with `x_t = a`, `x_{t−1} = b`.
    pub bigram: Matrix,
}

impl SequenceStats {
    pub fn from_sequence(inputs: &OneHotSequence) -> Result<Self> {
        Self::from_indices(inputs.indices(), inputs.dimension())
    }

    pub fn from_indices(indices: &[usize], dimension: usize) -> Result<Self> {
        let first = *indices
            .first()
            .ok_or_else(|| Error::InvalidArgument("input sequence is empty".into()))?;
        let mut unigram = vec![0.0; dimension];
        let mut bigram = Matrix::zeros(dimension, dimension);
        for (t, &m) in indices.iter().enumerate() {
            if m >= dimension {
                return Err(Error::IndexOutOfRange { index: m, dim: dimension });
            }
            unigram[m] += 1.0;
            if t > 0 {
                bigram[(m, indices[t - 1])] += 1.0;
            }
        }
        Ok(Self {
            dimension,
            len: indices.len(),
            first,
            unigram,
            bigram,
        })
    }
}

/// Values of the two summands and their λ-weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveBreakdown {
    pub fitness: f64,
    pub regularization: f64,
    pub lambda: f64,
    pub total: f64,
}

/// Ascent directions of `total` with respect to both weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub d_predictor: Matrix,
    pub d_generator: Matrix,
}

impl GradientPair {
    pub fn norm(&self) -> f64 {
        (self.d_predictor.frobenius_norm().powi(2) + self.d_generator.frobenius_norm().powi(2))
            .sqrt()
    }
}

/// A fixed input sequence and prior, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct UnsupervisedProblem<'a> {
    stats: SequenceStats,
    prior: &'a TransitionModel,
}

impl<'a> UnsupervisedProblem<'a> {
    pub fn new(inputs: &OneHotSequence, prior: &'a TransitionModel) -> Result<Self> {
        Self::from_stats(SequenceStats::from_sequence(inputs)?, prior)
    }

    pub fn from_stats(stats: SequenceStats, prior: &'a TransitionModel) -> Result<Self> {
        Ok(Self { stats, prior })
    }

    pub fn stats(&self) -> &SequenceStats {
        &self.stats
    }

    fn check_predictor(&self, predictor: &PredictorParams) -> Result<()> {
        if predictor.num_classes() != self.prior.num_classes() {
            return Err(Error::DimensionMismatch {
                what: "predictor classes vs prior classes",
                expected: self.prior.num_classes(),
                got: predictor.num_classes(),
            });
        }
        if predictor.num_inputs() != self.stats.dimension {
            return Err(Error::DimensionMismatch {
                what: "predictor inputs vs input dimension",
                expected: self.stats.dimension,
                got: predictor.num_inputs(),
            });
        }
        Ok(())
    }

    fn check_generator(&self, predictor: &PredictorParams, generator: &GeneratorParams) -> Result<()> {
        if generator.weights.shape() != (predictor.num_inputs(), predictor.num_classes()) {
            return Err(Error::InvalidArgument(format!(
                "generator shape {:?} does not match predictor shape {:?} transposed",
                generator.weights.shape(),
                predictor.weights.shape()
            )));
        }
        Ok(())
    }

    pub fn fitness(&self, predictor: &PredictorParams) -> Result<f64> {
        self.check_predictor(predictor)?;
        let q = predictor.predict_table();
        Ok(self.fitness_from_table(&q))
    }

    fn fitness_from_table(&self, q: &Matrix) -> f64 {
        let log_p = self.prior.log_matrix();
        let first = dot(&q.column(self.stats.first), self.prior.log_initial());
        // (ln P) Q, column b = (ln P) q_b
        let lq = log_p.matmul(q).expect("shapes checked");
        let m = self.stats.dimension;
        let mut pairs = 0.0;
        for a in 0..m {
            for b in 0..m {
                let n = self.stats.bigram[(a, b)];
                if n != 0.0 {
                    pairs += n * (0..q.rows()).map(|i| q[(i, a)] * lq[(i, b)]).sum::<f64>();
                }
            }
        }
        first + pairs
    }

    pub fn regularization(
        &self,
        predictor: &PredictorParams,
        generator: &GeneratorParams,
    ) -> Result<f64> {
        self.check_predictor(predictor)?;
        self.check_generator(predictor, generator)?;
        Ok(self.regularization_from_tables(&predictor.predict_table(), &generator.log_table()))
    }

    fn regularization_from_tables(&self, q: &Matrix, log_r: &Matrix) -> f64 {
        let mut total = 0.0;
        for (m, &count) in self.stats.unigram.iter().enumerate() {
            if count != 0.0 {
                total += count * (0..q.rows()).map(|j| q[(j, m)] * log_r[(m, j)]).sum::<f64>();
            }
        }
        total
    }

    pub fn evaluate(
        &self,
        predictor: &PredictorParams,
        generator: &GeneratorParams,
        lambda: f64,
    ) -> Result<ObjectiveBreakdown> {
        check_lambda(lambda)?;
        self.check_predictor(predictor)?;
        self.check_generator(predictor, generator)?;
        let q = predictor.predict_table();
        let fitness = self.fitness_from_table(&q);
        let regularization = self.regularization_from_tables(&q, &generator.log_table());
        Ok(ObjectiveBreakdown {
            fitness,
            regularization,
            lambda,
            total: fitness + lambda * regularization,
        })
    }

    /// Objective value and analytic ascent gradient.
    ///
    /// For input symbol `m` with distribution `q_m`, the predictor gradient is
    /// `γ_d (diag(q_m) − q_m q_mᵀ) g_m` where `g_m` collects, over positions
    /// with `x_t = m`, the derivative of the total with respect to `q_t`:
    /// `ln π` at `t = 1`, `(ln P) q_{t−1}` from the left neighbour,
    /// `(ln P)ᵀ q_{t+1}` from the right one, and `λ ln r(x_t | ·)`.
    pub fn gradient(
        &self,
        predictor: &PredictorParams,
        generator: &GeneratorParams,
        lambda: f64,
    ) -> Result<(ObjectiveBreakdown, GradientPair)> {
        check_lambda(lambda)?;
        self.check_predictor(predictor)?;
        self.check_generator(predictor, generator)?;
        let c = predictor.num_classes();
        let m_dim = predictor.num_inputs();
        let q = predictor.predict_table();
        let log_r = generator.log_table();
        let log_p = self.prior.log_matrix();

        let fitness = self.fitness_from_table(&q);
        let regularization = self.regularization_from_tables(&q, &log_r);
        let breakdown = ObjectiveBreakdown {
            fitness,
            regularization,
            lambda,
            total: fitness + lambda * regularization,
        };

        // d total / d q_m for every input symbol m, as columns of a C×M matrix
        let mut dq = Matrix::zeros(c, m_dim);
        let lq = log_p.matmul(&q)?; // column b: (ln P) q_b
        let ltq = log_p.transpose().matmul(&q)?; // column a: (ln P)ᵀ q_a
        for m in 0..m_dim {
            let mut g = vec![0.0; c];
            for b in 0..m_dim {
                // x_t = m preceded by b
                let n = self.stats.bigram[(m, b)];
                if n != 0.0 {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += n * lq[(i, b)];
                    }
                }
                // x_t = m followed by b
                let n = self.stats.bigram[(b, m)];
                if n != 0.0 {
                    for (i, gi) in g.iter_mut().enumerate() {
                        *gi += n * ltq[(i, b)];
                    }
                }
            }
            if m == self.stats.first {
                for (gi, lp) in g.iter_mut().zip(self.prior.log_initial()) {
                    *gi += lp;
                }
            }
            let count = self.stats.unigram[m];
            if lambda != 0.0 && count != 0.0 {
                for (j, gi) in g.iter_mut().enumerate() {
                    *gi += lambda * count * log_r[(m, j)];
                }
            }
            dq.set_column(m, &g);
        }

        let mut d_predictor = Matrix::zeros(c, m_dim);
        for m in 0..m_dim {
            let qm = q.column(m);
            let gm = dq.column(m);
            let mean = dot(&qm, &gm);
            let col: Vec<f64> = qm
                .iter()
                .zip(&gm)
                .map(|(qi, gi)| predictor.sharpness * qi * (gi - mean))
                .collect();
            d_predictor.set_column(m, &col);
        }

        // Column j of d_generator: λ γ_g Σ_m n_m q_m(j) (e_m − r_j)
        let mut d_generator = Matrix::zeros(m_dim, c);
        if lambda != 0.0 {
            for j in 0..c {
                let weights: Vec<f64> =
                    (0..m_dim).map(|m| self.stats.unigram[m] * q[(j, m)]).collect();
                let mass: f64 = weights.iter().sum();
                for m in 0..m_dim {
                    let r = log_r[(m, j)].exp();
                    d_generator[(m, j)] =
                        lambda * generator.sharpness * (weights[m] - mass * r);
                }
            }
        }

        Ok((
            breakdown,
            GradientPair {
                d_predictor,
                d_generator,
            },
        ))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn fitness_term(
    predictor: &PredictorParams,
    inputs: &OneHotSequence,
    prior: &TransitionModel,
) -> Result<f64> {
    UnsupervisedProblem::new(inputs, prior)?.fitness(predictor)
}

pub fn regularization_term(
    predictor: &PredictorParams,
    generator: &GeneratorParams,
    inputs: &OneHotSequence,
) -> Result<f64> {
    // the prior plays no part in the regularizer
    let stats = SequenceStats::from_sequence(inputs)?;
    if predictor.num_inputs() != stats.dimension {
        return Err(Error::DimensionMismatch {
            what: "predictor inputs vs input dimension",
            expected: stats.dimension,
            got: predictor.num_inputs(),
        });
    }
    if generator.weights.shape() != (predictor.num_inputs(), predictor.num_classes()) {
        return Err(Error::InvalidArgument(format!(
            "generator shape {:?} does not match predictor shape {:?} transposed",
            generator.weights.shape(),
            predictor.weights.shape()
        )));
    }
    let q = predictor.predict_table();
    let log_r = generator.log_table();
    Ok(stats
        .unigram
        .iter()
        .enumerate()
        .map(|(m, &n)| n * (0..q.rows()).map(|j| q[(j, m)] * log_r[(m, j)]).sum::<f64>())
        .sum())
}

pub fn unsupervised_objective(
    predictor: &PredictorParams,
    generator: &GeneratorParams,
    inputs: &OneHotSequence,
    prior: &TransitionModel,
    lambda: f64,
) -> Result<ObjectiveBreakdown> {
    UnsupervisedProblem::new(inputs, prior)?.evaluate(predictor, generator, lambda)
}

pub fn analytic_gradient(
    predictor: &PredictorParams,
    generator: &GeneratorParams,
    inputs: &OneHotSequence,
    prior: &TransitionModel,
    lambda: f64,
) -> Result<GradientPair> {
    UnsupervisedProblem::new(inputs, prior)?
        .gradient(predictor, generator, lambda)
        .map(|(_, g)| g)
}

/// Paired input/label counts for the supervised objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCounts {
    /// `counts[(y, m)]` = number of positions with input `m` and label `y`.
    pub counts: Matrix,
    pub len: usize,
}

impl PairCounts {
    pub fn new(inputs: &OneHotSequence, labels: &OneHotSequence) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "label sequence length",
                expected: inputs.len(),
                got: labels.len(),
            });
        }
        let mut counts = Matrix::zeros(labels.dimension(), inputs.dimension());
        for (&m, &y) in inputs.indices().iter().zip(labels.indices()) {
            counts[(y, m)] += 1.0;
        }
        Ok(Self {
            counts,
            len: inputs.len(),
        })
    }

    fn check(&self, predictor: &PredictorParams) -> Result<()> {
        if predictor.weights.shape() != self.counts.shape() {
            return Err(Error::InvalidArgument(format!(
                "predictor shape {:?} does not match (classes, inputs) = {:?}",
                predictor.weights.shape(),
                self.counts.shape()
            )));
        }
        Ok(())
    }

    /// `Σ_t ln q_t(y_t)`
    pub fn log_likelihood(&self, predictor: &PredictorParams) -> Result<f64> {
        self.check(predictor)?;
        let mut total = 0.0;
        for m in 0..self.counts.cols() {
            let log_q = log_softmax(&predictor.weights.column(m), predictor.sharpness);
            for (y, lq) in log_q.iter().enumerate() {
                let n = self.counts[(y, m)];
                if n != 0.0 {
                    total += n * lq;
                }
            }
        }
        Ok(total)
    }

    /// Ascent gradient of [`Self::log_likelihood`]; column `m` is
    /// `γ_d (n(·, m) − n_m q_m)`.
    pub fn gradient(&self, predictor: &PredictorParams) -> Result<(f64, Matrix)> {
        let value = self.log_likelihood(predictor)?;
        let q = predictor.predict_table();
        let mut grad = Matrix::zeros(self.counts.rows(), self.counts.cols());
        for m in 0..self.counts.cols() {
            let n_m: f64 = self.counts.column(m).iter().sum();
            for y in 0..self.counts.rows() {
                grad[(y, m)] = predictor.sharpness * (self.counts[(y, m)] - n_m * q[(y, m)]);
            }
        }
        Ok((value, grad))
    }
}

/// `Σ_t ln q_t(y_t)`, to be maximized.
pub fn supervised_cross_entropy(
    predictor: &PredictorParams,
    inputs: &OneHotSequence,
    labels: &OneHotSequence,
) -> Result<f64> {
    PairCounts::new(inputs, labels)?.log_likelihood(predictor)
}
