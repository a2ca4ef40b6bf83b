use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("amplitudes not normalized (norm^2 = {norm_sqr})")]
    NotNormalized { norm_sqr: f64 },

    #[error("state has zero norm")]
    ZeroNorm,

    #[error("complex couplings are not supported here")]
    ComplexCouplings,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("state is insensitive to coupling changes (f(N, b) = 0)")]
    InsensitiveState,

    #[error("non-finite value encountered after {steps} steps")]
    NonFinite { steps: usize },

    #[error(
        "no convergence after {steps} steps (last step norm {last_step_norm:e}, dark residual {dark_residual:e})"
    )]
    Timeout {
        steps: usize,
        last_step_norm: f64,
        dark_residual: f64,
    },

    #[error("system too large: {0}")]
    TooLarge(String),

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("calibration budget exhausted after {probes_used} probes, best bracket [{lo}, {hi}]")]
    CalibrationFailed { probes_used: usize, lo: f64, hi: f64 },

    #[error("inconsistent correlation matrix: {0}")]
    InconsistentCorrelation(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
