use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmarError {
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range [{lo}, {hi}]")]
    IndexOutOfRange { index: isize, lo: isize, hi: isize },

    #[error("empty candidate lag set at index {0}")]
    EmptyLagSet(isize),

    #[error("matrix is not positive definite ({0})")]
    SingularMatrix(String),

    #[error("horizon {k} out of range 1..={max}")]
    HorizonOutOfRange { k: usize, max: usize },

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("seed history too short: need {need}, got {got}")]
    SeedTooShort { need: usize, got: usize },

    #[error("probability {0} not in (0, 1)")]
    InvalidProbability(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("every grid point failed: {0}")]
    AllGridFailures(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LmarError>;
