//! JSON documents exchanged between subcommands.

use serde::{Deserialize, Serialize};
use unpaired::models::WeightsJson;

/// Learner-facing observations. Carries no label information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationsFile {
    pub dimension: usize,
    /// Positions `[0, split)` are the training portion.
    pub split: usize,
    pub observations: Vec<usize>,
}

/// A label corpus sampled independently of the observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnpairedLabelsFile {
    pub num_classes: usize,
    pub labels: Vec<usize>,
}

/// The hidden permutation, `observation = permutation[label]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerKeyFile {
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub predictor: WeightsJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<WeightsJson>,
}

pub const DATASET_FILE: &str = "dataset.json";
pub const OBSERVATIONS_FILE: &str = "observations.json";
pub const UNPAIRED_LABELS_FILE: &str = "unpaired_labels.json";
pub const ANSWER_KEY_FILE: &str = "answer_key.json";
pub const PRIOR_FILE: &str = "prior.json";
pub const MODEL_FILE: &str = "model.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const LANDSCAPE_FILE: &str = "landscape.csv";
pub const SWEEP_FILE: &str = "noise_sweep.csv";
pub const ORACLE_FILE: &str = "oracle.csv";
pub const EVAL_FILE: &str = "eval.json";
