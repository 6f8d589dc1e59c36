use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("insufficient horizon: {rule} not reached on (0, {horizon}]")]
    InsufficientHorizon { rule: String, horizon: f64 },

    #[error("{0} requires a path without Gaussian component")]
    GaussianPart(&'static str),

    #[error("jump set {0} is not separated from zero")]
    NotSeparated(String),

    #[error("backward series did not contract below {tail_tol} within {steps} steps")]
    NoContraction { tail_tol: f64, steps: usize },

    #[error(
        "spectral condition violated: smallest real part of an eigenvalue of Q is {min_re}, \
         but e^(-tQ) -> 0 requires all real parts to be positive"
    )]
    Spectral { min_re: f64 },

    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
