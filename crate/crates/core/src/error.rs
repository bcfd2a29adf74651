use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum SarmaError {
    /// Invalid argument, shape or index.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// A matrix that must be positive definite or invertible was not.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Every restart of an estimator failed.
    #[error("estimation failed: {0}")]
    Estimation(String),
    /// Covariance estimation failed (singular information matrix, ...).
    #[error("inference failed: {0}")]
    Inference(String),
    /// No order in the selection grid could be fitted.
    #[error("order selection failed: {0}")]
    Selection(String),
    /// The simulated path diverged.
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed CSV or JSON input.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SarmaError>;

pub(crate) fn arg<S: Into<String>>(msg: S) -> SarmaError {
    SarmaError::Argument(msg.into())
}
