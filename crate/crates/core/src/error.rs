use thiserror::Error;

/// Errors produced anywhere in the inference engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CdError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("degenerate conditional at coordinate {index}: every value is forbidden by the offset")]
    DegenerateConditional { index: usize },

    #[error("block of {size} indices exceeds the enumeration limit of {limit}")]
    BlockTooLarge { size: usize, limit: usize },

    #[error("pair ({0}, {1}) is not conditionally independent under this model")]
    InvalidPair(usize, usize),

    #[error("state space of dimension {dim} exceeds the enumeration limit of {limit}")]
    StateSpaceTooLarge { dim: usize, limit: usize },

    #[error("maximum likelihood estimate does not exist: {0}")]
    MleDoesNotExist(String),

    #[error("chain support has zero probability under the kernel")]
    UnreachableSupport,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, CdError>;
