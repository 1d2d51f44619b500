//! Markov-chain output prior.
//!
//! A [`TransitionModel`] is column-stochastic: entry `(i, j)` is
//! `p(y_t = i | y_{t-1} = j)`, so column `j` is the next-state distribution
//! given current state `j`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor applied inside every `ln` of a prior probability.
pub const LOG_FLOOR: f64 = 1e-12;
/// Entries are clipped to this value after Gaussian perturbation.
pub const PERTURB_CLIP: f64 = 1e-6;
pub const STOCHASTIC_TOL: f64 = 1e-9;
pub const POWER_ITERATION_CAP: usize = 10_000;
pub const POWER_ITERATION_TOL: f64 = 1e-12;
// 2^64 lazy steps; far beyond any chain whose entries are at least the clip.
const SQUARING_CAP: usize = 64;

/// Seed of the shipped default prior.
pub const DEFAULT_PRIOR_SEED: u64 = 72;
pub const DEFAULT_DIRICHLET_CONCENTRATION: f64 = 0.5;
pub const DEFAULT_PRIOR_FLOOR: f64 = 0.01;

pub(crate) fn floored_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    matrix: Matrix,
    log_matrix: Matrix,
    initial_dist: Vec<f64>,
    log_initial: Vec<f64>,
}

impl TransitionModel {
    /// Validates and wraps a column-stochastic matrix and an initial distribution.
    pub fn new(matrix: Matrix, initial_dist: Vec<f64>) -> Result<Self> {
        let c = matrix.rows();
        if c == 0 || matrix.cols() != c {
            return Err(Error::InvalidModel(format!(
                "transition matrix must be square and nonempty, got {:?}",
                matrix.shape()
            )));
        }
        check_column_stochastic(&matrix)?;
        if initial_dist.len() != c {
            return Err(Error::DimensionMismatch {
                what: "initial distribution length",
                expected: c,
                got: initial_dist.len(),
            });
        }
        check_distribution(&initial_dist, "initial distribution")?;
        Ok(Self::new_unchecked(matrix, initial_dist))
    }

    /// Wraps a column-stochastic matrix, using its stationary distribution as
    /// the initial distribution.
    pub fn with_stationary(matrix: Matrix) -> Result<Self> {
        let c = matrix.rows();
        let uniform = vec![1.0 / c.max(1) as f64; c];
        let provisional = Self::new(matrix, uniform)?;
        let pi = provisional.stationary_distribution()?;
        Ok(Self::new_unchecked(provisional.matrix, pi))
    }

    fn new_unchecked(matrix: Matrix, initial_dist: Vec<f64>) -> Self {
        let log_matrix = matrix.map(floored_ln);
        let log_initial = initial_dist.iter().map(|&p| floored_ln(p)).collect();
        Self {
            matrix,
            log_matrix,
            initial_dist,
            log_initial,
        }
    }

    /// Uniform transitions and uniform initial distribution.
    pub fn uniform(num_classes: usize) -> Result<Self> {
        let p = 1.0 / num_classes as f64;
        Self::new(
            Matrix::from_fn(num_classes, num_classes, |_, _| p),
            vec![p; num_classes],
        )
    }

    /// Deterministic cycle `j -> j + 1 (mod C)` started in state 0.
    pub fn cycle(num_classes: usize) -> Result<Self> {
        let matrix = Matrix::from_fn(num_classes, num_classes, |i, j| {
            if i == (j + 1) % num_classes {
                1.0
            } else {
                0.0
            }
        });
        let mut initial = vec![0.0; num_classes];
        initial[0] = 1.0;
        Self::new(matrix, initial)
    }

    /// Random prior with Dirichlet(`concentration`) columns, floored at `floor`
    /// and renormalized. Its initial distribution is the stationary one.
    pub fn random_dirichlet(
        num_classes: usize,
        concentration: f64,
        floor: f64,
        seed: u64,
    ) -> Result<Self> {
        if concentration <= 0.0 || !concentration.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "Dirichlet concentration must be positive, got {concentration}"
            )));
        }
        let gamma = Gamma::new(concentration, 1.0)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = Matrix::zeros(num_classes, num_classes);
        for j in 0..num_classes {
            let draws: Vec<f64> = (0..num_classes).map(|_| gamma.sample(&mut rng)).collect();
            let sum: f64 = draws.iter().sum();
            let floored: Vec<f64> = draws.iter().map(|d| (d / sum).max(floor)).collect();
            let total: f64 = floored.iter().sum();
            let column: Vec<f64> = floored.iter().map(|v| v / total).collect();
            matrix.set_column(j, &column);
        }
        Self::with_stationary(matrix)
    }

    /// The shipped 4-class benchmark prior.
    pub fn default_benchmark() -> Self {
        Self::random_dirichlet(
            4,
            DEFAULT_DIRICHLET_CONCENTRATION,
            DEFAULT_PRIOR_FLOOR,
            DEFAULT_PRIOR_SEED,
        )
        .expect("default prior parameters are valid")
    }

    pub fn num_classes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    /// Elementwise `ln(max(p, LOG_FLOOR))` of the transition matrix.
    pub fn log_matrix(&self) -> &Matrix {
        &self.log_matrix
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn log_initial(&self) -> &[f64] {
        &self.log_initial
    }

    /// `p(to | from)`
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.matrix[(to, from)]
    }

    /// Stationary distribution by power iteration on the lazy chain
    /// `(P + I) / 2`, which shares its fixed points with `P` but is aperiodic.
    ///
    /// Nearly reducible chains (heavily perturbed priors have entries at the
    /// clip value) mix too slowly for the iteration cap. If the plain iteration
    /// stalls, the lazy matrix is squared repeatedly to jump `2^k` steps ahead
    /// and the result is polished with another round of plain iteration.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        let c = self.num_classes();
        let uniform = vec![1.0 / c as f64; c];
        if let Some(pi) = self.power_iterate(uniform.clone()) {
            return Ok(pi);
        }
        let mut lazy = self.matrix.lerp(0.5, &Matrix::identity(c), 0.5)?;
        for _ in 0..SQUARING_CAP {
            lazy = lazy.matmul(&lazy)?;
            normalize_columns(&mut lazy);
        }
        self.power_iterate(lazy.mul_vec(&uniform))
            .ok_or(Error::NotConverged {
                what: "stationary distribution power iteration",
                cap: POWER_ITERATION_CAP,
            })
    }

    fn power_iterate(&self, mut pi: Vec<f64>) -> Option<Vec<f64>> {
        for _ in 0..POWER_ITERATION_CAP {
            let next = self.matrix.mul_vec(&pi);
            let residual = next
                .iter()
                .zip(&pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if residual <= POWER_ITERATION_TOL {
                let sum: f64 = next.iter().sum();
                return Some(next.into_iter().map(|v| v / sum).collect());
            }
            let lazy: Vec<f64> = next.iter().zip(&pi).map(|(a, b)| 0.5 * (a + b)).collect();
            let sum: f64 = lazy.iter().sum();
            pi = lazy.into_iter().map(|v| v / sum).collect();
        }
        None
    }

    /// Samples a length-`length` label sequence; seed-deterministic.
    pub fn sample_chain(&self, length: usize, seed: u64) -> Result<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_chain_with(length, &mut rng)
    }

    pub fn sample_chain_with<R: Rng + ?Sized>(
        &self,
        length: usize,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        if length == 0 {
            return Err(Error::InvalidArgument("chain length must be at least 1".into()));
        }
        let mut labels = Vec::with_capacity(length);
        let mut state = draw_categorical(&self.initial_dist, rng);
        labels.push(state);
        for _ in 1..length {
            let column = self.matrix.column(state);
            state = draw_categorical(&column, rng);
            labels.push(state);
        }
        Ok(labels)
    }

    /// Adds i.i.d. `N(0, sigma_p²)` noise to every entry, clips below at
    /// [`PERTURB_CLIP`] and renormalizes the columns. The perturbed model's
    /// initial distribution is its own stationary distribution.
    pub fn perturb(&self, sigma_p: f64, seed: u64) -> Result<Self> {
        if !(sigma_p >= 0.0) || !sigma_p.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma_p must be a finite nonnegative number, got {sigma_p}"
            )));
        }
        if sigma_p == 0.0 {
            return Ok(self.clone());
        }
        let normal = Normal::new(0.0, sigma_p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = self.num_classes();
        let mut noisy = Matrix::from_fn(c, c, |i, j| {
            (self.matrix[(i, j)] + normal.sample(&mut rng)).max(PERTURB_CLIP)
        });
        normalize_columns(&mut noisy);
        Self::with_stationary(noisy)
    }

    /// Max-abs entrywise difference of the transition matrices.
    pub fn max_entry_error(&self, other: &TransitionModel) -> f64 {
        self.matrix.max_abs_diff(&other.matrix)
    }
}

/// Result of [`estimate_transition`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    pub model: TransitionModel,
    /// Source states that were never observed with `alpha = 0`; their columns
    /// were set to uniform.
    pub defaulted_columns: Vec<usize>,
}

/// Count-based estimate with additive smoothing:
/// `p(i|j) = (n(j→i) + α) / (n(j→·) + Cα)`.
pub fn estimate_transition(
    labels: &[usize],
    num_classes: usize,
    alpha: f64,
) -> Result<TransitionEstimate> {
    if labels.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 labels to estimate transitions, got {}",
            labels.len()
        )));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "smoothing must be finite and nonnegative, got {alpha}"
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            dim: num_classes,
        });
    }
    let mut counts = Matrix::zeros(num_classes, num_classes);
    for pair in labels.windows(2) {
        counts[(pair[1], pair[0])] += 1.0;
    }
    let mut defaulted_columns = Vec::new();
    let mut matrix = Matrix::zeros(num_classes, num_classes);
    for j in 0..num_classes {
        let outgoing: f64 = counts.column(j).iter().sum();
        let denom = outgoing + num_classes as f64 * alpha;
        if denom == 0.0 {
            defaulted_columns.push(j);
            matrix.set_column(j, &vec![1.0 / num_classes as f64; num_classes]);
            continue;
        }
        for i in 0..num_classes {
            matrix[(i, j)] = (counts[(i, j)] + alpha) / denom;
        }
    }
    Ok(TransitionEstimate {
        model: TransitionModel::with_stationary(matrix)?,
        defaulted_columns,
    })
}

fn normalize_columns(m: &mut Matrix) {
    for j in 0..m.cols() {
        let col = m.column(j);
        let sum: f64 = col.iter().sum();
        let normalized: Vec<f64> = col.iter().map(|v| v / sum).collect();
        m.set_column(j, &normalized);
    }
}

fn check_column_stochastic(m: &Matrix) -> Result<()> {
    for j in 0..m.cols() {
        check_distribution(&m.column(j), "transition column").map_err(|e| match e {
            Error::InvalidModel(msg) => Error::InvalidModel(format!("column {j}: {msg}")),
            other => other,
        })?;
    }
    Ok(())
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidModel(format!("{what} has invalid entry {bad}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

fn draw_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap at the top; take the last state with mass
    p.iter().rposition(|&pk| pk > 0.0).unwrap_or(0)
}

/// On-disk form: `{"num_classes": C, "matrix": [[p(i|j)]...], "initial_dist": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModelJson {
    pub num_classes: usize,
    pub matrix: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
}

impl From<&TransitionModel> for TransitionModelJson {
    fn from(m: &TransitionModel) -> Self {
        Self {
            num_classes: m.num_classes(),
            matrix: m.matrix.to_rows(),
            initial_dist: m.initial_dist.clone(),
        }
    }
}

impl TryFrom<TransitionModelJson> for TransitionModel {
    type Error = Error;

    fn try_from(doc: TransitionModelJson) -> Result<Self> {
        if doc.matrix.len() != doc.num_classes {
            return Err(Error::DimensionMismatch {
                what: "matrix rows",
                expected: doc.num_classes,
                got: doc.matrix.len(),
            });
        }
        TransitionModel::new(Matrix::from_rows(&doc.matrix)?, doc.initial_dist)
    }
}

impl Serialize for TransitionModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TransitionModelJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for TransitionModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = TransitionModelJson::deserialize(d)?;
        TransitionModel::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> TransitionModel {
        // columns (a, 1-a) and (b, 1-b)
        let m = Matrix::from_rows(&[vec![a, b], vec![1.0 - a, 1.0 - b]]).unwrap();
        TransitionModel::with_stationary(m).unwrap()
    }

    #[test]
    fn cycle_chain_is_deterministic() {
        let p = TransitionModel::cycle(4).unwrap();
        assert_eq!(p.sample_chain(5, 123).unwrap(), vec![0, 1, 2, 3, 0]);
    }

    #[test]
    fn same_seed_same_chain() {
        let p = TransitionModel::default_benchmark();
        assert_eq!(p.sample_chain(500, 9).unwrap(), p.sample_chain(500, 9).unwrap());
        assert_ne!(p.sample_chain(500, 9).unwrap(), p.sample_chain(500, 10).unwrap());
    }

    #[test]
    fn empirical_transitions_match_within_three_standard_errors() {
        let p = two_state(0.9, 0.1);
        let labels = p.sample_chain(100_000, 42).unwrap();
        let mut counts = [[0usize; 2]; 2];
        for w in labels.windows(2) {
            counts[w[1]][w[0]] += 1;
        }
        for j in 0..2 {
            let n = (counts[0][j] + counts[1][j]) as f64;
            for i in 0..2 {
                let truth = p.prob(i, j);
                let freq = counts[i][j] as f64 / n;
                let se = (truth * (1.0 - truth) / n).sqrt();
                assert!((freq - truth).abs() < 3.0 * se, "({i},{j}) {freq} vs {truth}");
            }
        }
    }

    #[test]
    fn rejects_non_stochastic() {
        let m = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.6, 0.5]]).unwrap();
        assert!(matches!(
            TransitionModel::new(m, vec![0.5, 0.5]),
            Err(Error::InvalidModel(_))
        ));
        let neg = Matrix::from_rows(&[vec![1.1, 0.5], vec![-0.1, 0.5]]).unwrap();
        assert!(TransitionModel::new(neg, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn log_matrix_is_floored() {
        let p = TransitionModel::cycle(3).unwrap();
        assert_eq!(p.log_matrix()[(1, 0)], 0.0);
        assert_eq!(p.log_matrix()[(0, 0)], LOG_FLOOR.ln());
        assert_eq!(p.log_initial()[2], LOG_FLOOR.ln());
    }

    #[test]
    fn estimate_alternating() {
        let est = estimate_transition(&[0, 1, 0, 1, 0], 2, 0.0).unwrap();
        assert_eq!(est.model.prob(1, 0), 1.0);
        assert_eq!(est.model.prob(0, 1), 1.0);
        assert!(est.defaulted_columns.is_empty());
        // periodic chain still has a stationary distribution
        let pi = est.model.initial_dist();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn estimate_flags_unseen_columns() {
        let est = estimate_transition(&[0, 0, 0, 1], 3, 0.0).unwrap();
        assert_eq!(est.defaulted_columns, vec![1, 2]);
        assert_eq!(est.model.prob(0, 2), 1.0 / 3.0);
    }

    #[test]
    fn heavy_smoothing_goes_uniform() {
        let labels = TransitionModel::default_benchmark().sample_chain(1000, 1).unwrap();
        let est = estimate_transition(&labels, 4, 1e9).unwrap();
        for v in est.model.matrix().as_slice() {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn estimate_recovers_sampling_matrix() {
        let truth = TransitionModel::default_benchmark();
        let labels = truth.sample_chain(200_000, 3).unwrap();
        let est = estimate_transition(&labels, 4, 1.0).unwrap();
        assert!(est.model.max_entry_error(&truth) < 0.01);
    }

    #[test]
    fn estimate_rejects_short_input() {
        assert!(estimate_transition(&[0], 2, 1.0).is_err());
        assert!(estimate_transition(&[0, 5], 2, 1.0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = TransitionModel::default_benchmark();
        assert_eq!(p.perturb(0.0, 5).unwrap(), p);
    }

    #[test]
    fn perturbation_is_seeded_and_stochastic() {
        let p = TransitionModel::default_benchmark();
        let a = p.perturb(0.1, 11).unwrap();
        let b = p.perturb(0.1, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, p);
        for sigma in [0.01, 0.3, 5.0] {
            let q = p.perturb(sigma, 2).unwrap();
            for j in 0..4 {
                let col = q.matrix().column(j);
                assert!((col.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(col.iter().all(|&v| v >= 0.0));
            }
        }
        assert!(p.perturb(-0.1, 1).is_err());
    }

    #[test]
    fn stationary_examples() {
        let uniform = TransitionModel::uniform(4).unwrap();
        for v in uniform.stationary_distribution().unwrap() {
            assert!((v - 0.25).abs() < 1e-15);
        }

        let p = two_state(0.9, 0.5);
        let pi = p.stationary_distribution().unwrap();
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-9);
        assert!((pi[1] - 1.0 / 6.0).abs() < 1e-9);

        // doubly stochastic
        let ds = Matrix::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
            vec![0.5, 0.3, 0.2],
        ])
        .unwrap();
        let pi = TransitionModel::with_stationary(ds).unwrap().stationary_distribution().unwrap();
        for v in pi {
            assert!((v - 1.0 / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn stationary_residual_is_tiny() {
        for seed in 0..20 {
            let p = TransitionModel::random_dirichlet(5, 0.5, 0.01, seed).unwrap();
            let pi = p.stationary_distribution().unwrap();
            let ppi = p.matrix().mul_vec(&pi);
            let res = ppi.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(res <= 1e-10, "seed {seed}: {res}");
        }
    }

    #[test]
    fn slowly_mixing_chain_converges() {
        // leak rates 1e-7 and 2e-7 give π = (2/3, 1/3) and a mixing time of
        // millions of steps
        let p = Matrix::from_rows(&[vec![1.0 - 1e-7, 2e-7], vec![1e-7, 1.0 - 2e-7]]).unwrap();
        let pi = TransitionModel::new(p, vec![0.5, 0.5])
            .unwrap()
            .stationary_distribution()
            .unwrap();
        assert!((pi[0] - 2.0 / 3.0).abs() < 1e-9, "{pi:?}");
    }

    #[test]
    fn json_round_trip_and_validation() {
        let p = TransitionModel::default_benchmark();
        let text = serde_json::to_string(&p).unwrap();
        let back: TransitionModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.matrix(), p.matrix());
        let bad = r#"{"num_classes":2,"matrix":[[0.5,0.5],[0.4,0.5]],"initial_dist":[0.5,0.5]}"#;
        assert!(serde_json::from_str::<TransitionModel>(bad).is_err());
    }
}
