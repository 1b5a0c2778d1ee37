use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error(
        "same-time block is numerically singular (smallest singular value {sigma_min:.3e}, largest {sigma_max:.3e})"
    )]
    SingularBlock { sigma_min: f64, sigma_max: f64 },

    #[error("truncation threshold {threshold:e} discards every singular mode")]
    RankFailure { threshold: f64 },

    #[error("non-finite value {value} at time step {step}, node {node}")]
    NonFinite { step: usize, node: usize, value: f64 },

    #[error("nonlinearity violates G(0, x, 0) = 0 at node {node} (value {value:e})")]
    NonzeroAtOrigin { node: usize, value: f64 },

    #[error("growth condition fails: fitted exponent {slope:.3} (needs < 1)")]
    GrowthViolation { slope: f64 },

    #[error(transparent)]
    Expression(#[from] ExprError),

    #[error("operator dump: {0}")]
    Dump(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
