//! Synthetic benchmark: a Markov label sequence observed through a hidden
//! permutation, `x_t = σ(y_t)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::OneHotSequence;
use crate::prior::TransitionModel;

pub const DEFAULT_LENGTH: usize = 10_000;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_UNPAIRED_LENGTH: usize = 10_000;

// Sub-seed salts so labels, permutation and the unpaired corpus draw from
// independent streams of one dataset seed.
const LABEL_SALT: u64 = 0x6c61_6265_6c73;
const PERMUTATION_SALT: u64 = 0x7065_726d;
const UNPAIRED_SALT: u64 = 0x756e_7061_6972;

/// Derives an independent stream seed from `seed` and a per-purpose salt.
pub fn sub_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform random bijection on `[0, size)` (Fisher–Yates).
pub fn random_permutation(size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::InvalidArgument("permutation size must be at least 1".into()));
    }
    let mut perm: Vec<usize> = (0..size).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(perm)
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter().all(|&p| p < perm.len() && !std::mem::replace(&mut seen[p], true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    labels: OneHotSequence,
    observations: OneHotSequence,
    /// `observations[t] == permutation[labels[t]]`
    permutation: Vec<usize>,
    split: usize,
}

impl SyntheticDataset {
    pub fn from_parts(labels: Vec<usize>, permutation: Vec<usize>, split: usize) -> Result<Self> {
        if !is_permutation(&permutation) {
            return Err(Error::InvalidArgument(format!(
                "{permutation:?} is not a permutation"
            )));
        }
        let c = permutation.len();
        if split > labels.len() {
            return Err(Error::InvalidArgument(format!(
                "split {split} exceeds sequence length {}",
                labels.len()
            )));
        }
        let labels = OneHotSequence::new(labels, c)?;
        let observations = OneHotSequence::new(
            labels.indices().iter().map(|&y| permutation[y]).collect(),
            c,
        )?;
        Ok(Self {
            labels,
            observations,
            permutation,
            split,
        })
    }

    pub fn labels(&self) -> &OneHotSequence {
        &self.labels
    }

    pub fn observations(&self) -> &OneHotSequence {
        &self.observations
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Label-from-observation map `σ⁻¹`; the ideal predictor routes input `m`
    /// to class `inverse_permutation()[m]`.
    pub fn inverse_permutation(&self) -> Vec<usize> {
        invert_permutation(&self.permutation)
    }

    pub fn split(&self) -> usize {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Training observations, the only thing the unsupervised learner sees.
    pub fn train_observations(&self) -> OneHotSequence {
        self.observations.slice(0, self.split)
    }

    pub fn train_pairs(&self) -> (OneHotSequence, OneHotSequence) {
        (
            self.observations.slice(0, self.split),
            self.labels.slice(0, self.split),
        )
    }

    /// Held-out paired data for evaluation. When the split covers the whole
    /// sequence the training part doubles as the test set.
    pub fn test_pairs(&self) -> (OneHotSequence, OneHotSequence) {
        if self.split == self.len() {
            return self.train_pairs();
        }
        (
            self.observations.slice(self.split, self.len()),
            self.labels.slice(self.split, self.len()),
        )
    }
}

pub fn make_dataset(
    prior: &TransitionModel,
    length: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    let perm = random_permutation(prior.num_classes(), sub_seed(seed, PERMUTATION_SALT))?;
    make_dataset_with_permutation(prior, length, train_fraction, seed, perm)
}

/// Like [`make_dataset`] with a caller-chosen permutation.
pub fn make_dataset_with_permutation(
    prior: &TransitionModel,
    length: usize,
    train_fraction: f64,
    seed: u64,
    permutation: Vec<usize>,
) -> Result<SyntheticDataset> {
    if length < 2 {
        return Err(Error::InvalidArgument(format!(
            "dataset length must be at least 2, got {length}"
        )));
    }
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    if permutation.len() != prior.num_classes() {
        return Err(Error::DimensionMismatch {
            what: "permutation length",
            expected: prior.num_classes(),
            got: permutation.len(),
        });
    }
    let labels = prior.sample_chain(length, sub_seed(seed, LABEL_SALT))?;
    let split = ((train_fraction * length as f64).floor() as usize).max(1);
    SyntheticDataset::from_parts(labels, permutation, split)
}

/// A label corpus drawn independently of any dataset's labels, for
/// estimating the prior without pairing.
pub fn unpaired_labels(prior: &TransitionModel, length: usize, seed: u64) -> Result<Vec<usize>> {
    prior.sample_chain(length, sub_seed(seed, UNPAIRED_SALT))
}

/// `{"labels", "observations", "permutation", "split"}`
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetJson {
    pub labels: Vec<usize>,
    pub observations: Vec<usize>,
    pub permutation: Vec<usize>,
    pub split: usize,
}

impl From<&SyntheticDataset> for DatasetJson {
    fn from(d: &SyntheticDataset) -> Self {
        Self {
            labels: d.labels.indices().to_vec(),
            observations: d.observations.indices().to_vec(),
            permutation: d.permutation.clone(),
            split: d.split,
        }
    }
}

impl TryFrom<DatasetJson> for SyntheticDataset {
    type Error = Error;

    fn try_from(doc: DatasetJson) -> Result<Self> {
        let ds = SyntheticDataset::from_parts(doc.labels, doc.permutation, doc.split)?;
        if ds.observations.indices() != doc.observations.as_slice() {
            return Err(Error::InvalidArgument(
                "observations are not the permuted labels".into(),
            ));
        }
        Ok(ds)
    }
}
