//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("grid of {requested} points exceeds cap of {cap}")]
    GridTooLarge { requested: usize, cap: usize },

    #[error(
        "quadrature did not converge for {context}: estimate {estimate:e}, \
         last change {change:e} after {panels} panels"
    )]
    QuadratureFailure {
        context: String,
        estimate: f64,
        change: f64,
        panels: usize,
    },

    #[error("time {t} outside tabulated range [0, {t_max}]")]
    OutOfRange { t: f64, t_max: f64 },

    #[error("degenerate horizon t = {t}: {what}")]
    DegenerateHorizon { t: f64, what: String },

    #[error("singular master-equation coefficient at t = {t} (Wronskian vanishes)")]
    SingularCoefficient { t: f64 },

    #[error("coefficient trajectory has a gap at t = {t}")]
    TrajectoryGap { t: f64 },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("non-integrable Gaussian exponent: {0}")]
    NonIntegrable(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
