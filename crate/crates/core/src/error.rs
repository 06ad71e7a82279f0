use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid power allocation: {0}")]
    InvalidPower(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} out of range (limit {limit})")]
    OutOfRange { value: u64, limit: u64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("covariance matrix is not Hermitian positive-definite")]
    NotPositiveDefinite,

    #[error("channel has no singular value decomposition: {0}")]
    MissingSvd(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("channel Gram matrix is singular")]
    SingularChannel,

    #[error("ML search space of {size} hypotheses exceeds cap {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },

    #[error("flop count overflows 128 bits")]
    Overflow,

    #[error("optimizer did not converge after {iterations} outer iterations (best rate {rate})")]
    NotConverged {
        iterations: usize,
        best: Vec<f64>,
        rate: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
