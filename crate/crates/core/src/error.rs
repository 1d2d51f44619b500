use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid transition model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("{what} did not converge within {cap} iterations")]
    NotConverged { what: &'static str, cap: usize },

    #[error("rank-1 score is undefined for the zero matrix")]
    ZeroMatrix,

    #[error("permutation oracle supports at most {max} classes, got {got}")]
    TooManyClasses { max: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
