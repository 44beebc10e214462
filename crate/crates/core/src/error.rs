use thiserror::Error;

/// Errors raised by the sampling, transformation and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("correlation matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("extrapolation undefined: beta = {0} must lie in (0, 1/e)")]
    ExtrapolationUndefined(f64),

    #[error("no outward extrapolation (r = {0}): increase h or decrease beta")]
    NoOutwardExtrapolation(f64),

    #[error("beta too large for sampled tail mass (beta = {beta}, tail mass = {mass})")]
    BetaTooLarge { beta: f64, mass: f64 },

    #[error("naive estimation infeasible: n * beta = {0} is below the guard of {min}", min = crate::estimators::NAIVE_MIN_TAIL_COUNT)]
    NaiveInfeasible(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("mean of replicated values is zero")]
    ZeroMean,

    #[error("no usable grid point for cross-validation")]
    EmptyGrid,
}

pub type Result<T> = std::result::Result<T, Error>;
