use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("eigen-solver failed to converge")]
    ConvergenceFailure,
    #[error("eliminated block is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularBlock { condition: f64 },
    #[error("matrix is not unitary (residual {residual:.3e})")]
    NotUnitary { residual: f64 },
    #[error("matrix is not orthogonal (residual {residual:.3e})")]
    NotOrthogonal { residual: f64 },
    #[error("index {index} out of range for {len} modes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("measured quadrature has degenerate variance {variance:.3e}")]
    DegenerateVariance { variance: f64 },
    #[error("size {0} is odd")]
    OddModeCount(usize),
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("too small: {0}")]
    TooSmall(String),
    #[error("{0} modes exceeds the bipartition sweep limit of 24")]
    TooManyModes(usize),
    #[error("measurement design has rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("unknown syndrome label {0:?}")]
    UnknownSyndrome(String),
    #[error("invalid quadrature form: {0}")]
    InvalidForm(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad matrix file: {0}")]
    BadMatrix(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
