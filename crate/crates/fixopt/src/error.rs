use thiserror::Error;

/// Errors produced by solvers, norms, and the optimization driver.
#[derive(Debug, Error)]
pub enum FixoptError {
    #[error("vector of length {got} does not match the expected layout length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("no convergence after {steps} steps (last increment norm {last_increment_norm:e})")]
    NonConvergence {
        steps: usize,
        last_increment_norm: f64,
    },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("contraction coefficient must lie in (0, 1), got {0}")]
    InvalidBeta(f64),

    #[error("norm kind {0} is not supported for this operation")]
    UnsupportedNorm(String),

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, FixoptError>;

impl FixoptError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FixoptError::InvalidInput(msg.into())
    }
}
