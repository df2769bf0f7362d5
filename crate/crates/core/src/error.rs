use thiserror::Error;

/// Errors produced anywhere in the optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SsboError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate {index} = {value} lies outside [{lower}, {upper}]")]
    OutOfBounds {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    #[error("duplicate inputs at rows {first} and {second}")]
    DuplicateInputs { first: usize, second: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("interpolation system is singular even after regularization")]
    Unsolvable,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SsboError {
    fn from(err: std::io::Error) -> Self {
        SsboError::Io(err.to_string())
    }
}

impl From<csv::Error> for SsboError {
    fn from(err: csv::Error) -> Self {
        SsboError::Io(err.to_string())
    }
}

impl From<serde_json::Error> for SsboError {
    fn from(err: serde_json::Error) -> Self {
        SsboError::Io(err.to_string())
    }
}

pub type Result<T, E = SsboError> = std::result::Result<T, E>;
