use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid diffusion spec: {0}")]
    InvalidSpec(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical failure: {message} (residual {residual:e})")]
    NumericalFailure { message: String, residual: f64 },

    #[error("integration failed at t = {time}: {reason}")]
    IntegrationFailure { time: f64, reason: String },

    #[error("degenerate window [{t_lo}, {t_hi}]: {reason}")]
    DegenerateWindow { t_lo: f64, t_hi: f64, reason: String },

    #[error("no bracket: slope({p_lo}) = {slope_lo:e} and slope({p_hi}) = {slope_hi:e} have the same sign")]
    NoBracket {
        p_lo: f64,
        p_hi: f64,
        slope_lo: f64,
        slope_hi: f64,
    },

    #[error("premise violated: {0}")]
    PremiseViolation(String),

    #[error("invalid invariant set: {0}")]
    InvalidInvariantSet(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
