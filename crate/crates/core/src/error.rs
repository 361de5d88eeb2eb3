use alloc::string::String;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("matrix is not symmetric positive semi-definite")]
    NotSpd,
    #[error("covariance is singular even after regularization")]
    Singular,
    #[error("EM failed: component collapse persisted after {reseeds} reseeds in every run")]
    Collapse { reseeds: usize },
    #[error("phase bin {bin} is empty; use fewer bins")]
    EmptyBin { bin: usize },
    #[error("zero ground-truth variance in `{0}`")]
    ZeroVariance(&'static str),
    #[error("all samples identical; an explicit bandwidth is required")]
    IdenticalSamples,
    #[error("missing column: {0}")]
    Missing(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
