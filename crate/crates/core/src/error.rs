//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A state or time argument lies outside its admissible domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller violated an operation's contract (empty grid, missing
    /// derivative, wrong branch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A parameter record failed validation. `code` is machine-readable
    /// (e.g. "feller-violation") and stable across releases.
    #[error("invalid parameter [{code}]: {message}")]
    Parameter { code: String, message: String },

    /// A numerical routine failed to converge or produced non-finite output.
    #[error("numerical failure: {0}")]
    Numerics(String),

    /// A Monte Carlo estimator could not produce a trustworthy estimate.
    #[error("estimator failure: {0}")]
    Estimator(String),

    /// A PDE solve became unstable.
    #[error("solver instability: {0}")]
    Solver(String),
}

impl Error {
    pub fn parameter(code: &str, message: impl Into<String>) -> Self {
        Error::Parameter {
            code: code.to_string(),
            message: message.into(),
        }
    }

    /// Machine-readable code for validation-style errors, when present.
    pub fn code(&self) -> Option<&str> {
        match self {
            Error::Parameter { code, .. } => Some(code),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
