//! Landscape probes, singular values, the permutation oracle and test error.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{argmax, OneHotSequence, PredictorParams};
use crate::prior::TransitionModel;

pub const JACOBI_SWEEP_CAP: usize = 100;
pub const JACOBI_TOL: f64 = 1e-14;
/// Largest class count the oracle will enumerate (8! = 40320 permutations).
pub const ORACLE_MAX_CLASSES: usize = 8;

/// Singular values in descending order.
///
/// One-sided (Hestenes) cyclic Jacobi: column pairs are rotated until they
/// are mutually orthogonal, which diagonalizes the Gram matrix `AᵀA`
/// implicitly. The singular values are then the column norms.
pub fn singular_values(matrix: &Matrix) -> Result<Vec<f64>> {
    // work on the orientation with fewer columns
    let a = if matrix.cols() > matrix.rows() {
        matrix.transpose()
    } else {
        matrix.clone()
    };
    let (rows, cols) = a.shape();
    let mut columns: Vec<Vec<f64>> = (0..cols).map(|j| a.column(j)).collect();

    let mut converged = cols < 2;
    for _ in 0..JACOBI_SWEEP_CAP {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha: f64 = columns[p].iter().map(|v| v * v).sum();
                let beta: f64 = columns[q].iter().map(|v| v * v).sum();
                let gamma: f64 = columns[p].iter().zip(&columns[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let xp = columns[p][i];
                    let xq = columns[q][i];
                    columns[p][i] = c * xp - s * xq;
                    columns[q][i] = s * xp + c * xq;
                }
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NotConverged {
            what: "Jacobi singular value sweep",
            cap: JACOBI_SWEEP_CAP,
        });
    }
    let mut values: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values.truncate(rows.min(cols));
    Ok(values)
}

/// `σ₂ / σ₁`; zero means the matrix has rank at most one.
pub fn rank1_score(matrix: &Matrix) -> Result<f64> {
    let s = singular_values(matrix)?;
    match s.first() {
        Some(&top) if top > 0.0 => Ok(s.get(1).map_or(0.0, |second| second / top)),
        _ => Err(Error::ZeroMatrix),
    }
}

/// Largest total-variation distance between the predicted distributions of
/// any two inputs. Zero for an input-independent predictor.
pub fn max_tv_distance(predictor: &PredictorParams) -> f64 {
    let q = predictor.predict_table();
    let mut worst: f64 = 0.0;
    for a in 0..q.cols() {
        for b in a + 1..q.cols() {
            let tv = 0.5 * (0..q.rows()).map(|i| (q[(i, a)] - q[(i, b)]).abs()).sum::<f64>();
            worst = worst.max(tv);
        }
    }
    worst
}

/// Fraction of positions whose argmax prediction differs from the label.
pub fn test_error(
    predictor: &PredictorParams,
    inputs: &OneHotSequence,
    labels: &OneHotSequence,
) -> Result<f64> {
    if inputs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "label sequence length",
            expected: inputs.len(),
            got: labels.len(),
        });
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("test error of an empty sequence".into()));
    }
    let table = predictor.predict_table();
    if inputs.dimension() != table.cols() {
        return Err(Error::DimensionMismatch {
            what: "predictor inputs vs input dimension",
            expected: inputs.dimension(),
            got: table.cols(),
        });
    }
    let classes: Vec<usize> = (0..table.cols()).map(|m| argmax(&table.column(m))).collect();
    let wrong = inputs
        .indices()
        .iter()
        .zip(labels.indices())
        .filter(|(&m, &y)| classes[m] != y)
        .count();
    Ok(wrong as f64 / inputs.len() as f64)
}

/// The predictor that routes input `m` to class `routing[m]` with weight `scale`.
pub fn routing_weights(routing: &[usize], num_classes: usize, scale: f64) -> Matrix {
    let mut w = Matrix::zeros(num_classes, routing.len());
    for (m, &c) in routing.iter().enumerate() {
        w[(c, m)] = scale;
    }
    w
}

/// One labeled objective along a landscape line. The closure returns the
/// value to be maximized; the probe records its negative.
pub struct Curve<'a> {
    pub label: String,
    pub objective: Box<CurveFn<'a>>,
}

pub type CurveFn<'a> = dyn Fn(&Matrix) -> Result<f64> + Sync + 'a;

impl<'a> Curve<'a> {
    pub fn new(
        label: impl Into<String>,
        objective: impl Fn(&Matrix) -> Result<f64> + Sync + 'a,
    ) -> Self {
        Self {
            label: label.into(),
            objective: Box::new(objective),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeProbe {
    pub labels: Vec<String>,
    /// `(t, negative objective per curve)`
    pub rows: Vec<(f64, Vec<f64>)>,
}

impl LandscapeProbe {
    pub fn curve(&self, label: &str) -> Option<Vec<f64>> {
        let k = self.labels.iter().position(|l| l == label)?;
        Some(self.rows.iter().map(|(_, v)| v[k]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (t, values) in &self.rows {
            let _ = write!(out, "{t}");
            for v in values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Grid `min, min + step, …, ≤ max`, rounded to 1e-9 so that points such as
/// 0 and 1 are hit exactly.
pub fn line_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "bad grid: min {min}, max {max}, step {step}"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| ((min + k as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// Evaluates every curve at `t·A + (1−t)·B` for each `t` in `grid`. The
/// endpoints themselves are used at `t = 1` and `t = 0`.
pub fn landscape_line(
    endpoint_a: &Matrix,
    endpoint_b: &Matrix,
    grid: &[f64],
    curves: &[Curve<'_>],
) -> Result<LandscapeProbe> {
    endpoint_a.check_same_shape(endpoint_b)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("landscape grid is empty".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("landscape grid must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &t in grid {
        let point = if t == 1.0 {
            endpoint_a.clone()
        } else if t == 0.0 {
            endpoint_b.clone()
        } else {
            endpoint_a.lerp(t, endpoint_b, 1.0 - t)?
        };
        let values = curves
            .iter()
            .map(|c| (c.objective)(&point).map(|v| -v))
            .collect::<Result<Vec<_>>>()?;
        rows.push((t, values));
    }
    Ok(LandscapeProbe {
        labels: curves.iter().map(|c| c.label.clone()).collect(),
        rows,
    })
}

/// `anchor + scale · G`, `G` i.i.d. standard normal.
pub fn random_line_endpoint(anchor: &Matrix, scale: f64, seed: u64) -> Result<Matrix> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be nonnegative, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Matrix::from_fn(anchor.rows(), anchor.cols(), |_, _| {
        StandardNormal.sample(&mut rng)
    });
    anchor.lerp(1.0, &noise, scale)
}

/// `v[k−1] − 2v[k] + v[k+1]` for interior points.
pub fn second_differences(values: &[f64]) -> Vec<f64> {
    values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Every bijection `R` (input index → class) with its fitness score, in
    /// lexicographic order of `R`.
    pub table: Vec<(Vec<usize>, f64)>,
    pub best: Vec<usize>,
    pub best_score: f64,
    /// Best score minus runner-up score; infinite when only one bijection exists.
    pub margin: f64,
}

pub const IDENTIFIABILITY_TOL: f64 = 1e-9;

impl OracleResult {
    pub fn is_identifiable(&self) -> bool {
        self.margin > IDENTIFIABILITY_TOL
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("permutation,score\n");
        for (perm, score) in &self.table {
            let notation: Vec<String> = perm.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "\"{}\",{}", notation.join(","), score);
        }
        out
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Scores every hard classifier `x ↦ R(x)` by the log-likelihood of the
/// relabeled sequence under the prior, summed position by position.
pub fn permutation_oracle(
    observations: &OneHotSequence,
    prior: &TransitionModel,
) -> Result<OracleResult> {
    let c = prior.num_classes();
    if c > ORACLE_MAX_CLASSES {
        return Err(Error::TooManyClasses {
            max: ORACLE_MAX_CLASSES,
            got: c,
        });
    }
    if observations.dimension() != c {
        return Err(Error::DimensionMismatch {
            what: "observation dimension vs prior classes",
            expected: c,
            got: observations.dimension(),
        });
    }
    let xs = observations.indices();
    let first = *xs
        .first()
        .ok_or_else(|| Error::InvalidArgument("observation sequence is empty".into()))?;
    let log_p = prior.log_matrix();
    let log_pi = prior.log_initial();

    let mut perm: Vec<usize> = (0..c).collect();
    let mut table = Vec::new();
    loop {
        let mut score = log_pi[perm[first]];
        for w in xs.windows(2) {
            score += log_p[(perm[w[1]], perm[w[0]])];
        }
        table.push((perm.clone(), score));
        if !next_permutation(&mut perm) {
            break;
        }
    }

    let mut ranked: Vec<usize> = (0..table.len()).collect();
    // stable sort keeps the lexicographically first bijection on exact ties
    ranked.sort_by(|&a, &b| table[b].1.total_cmp(&table[a].1));
    let best = table[ranked[0]].0.clone();
    let best_score = table[ranked[0]].1;
    let margin = ranked
        .get(1)
        .map_or(f64::INFINITY, |&k| best_score - table[k].1);
    Ok(OracleResult {
        table,
        best,
        best_score,
        margin,
    })
}
