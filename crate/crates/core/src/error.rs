use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("training failed: held-out accuracy {accuracy:.4} after {epochs} epochs")]
    TrainingFailed { accuracy: f64, epochs: usize },

    /// The proximal iterate left the trust region around the input.
    #[error("solver diverged at iteration {iteration}: |x_t - x| = {distance:.3e} exceeds {limit:.3e} (rho too large for this function?)")]
    Divergence {
        iteration: usize,
        distance: f64,
        limit: f64,
    },

    #[error("attack precondition failed: {0}")]
    Precondition(String),

    #[error("unsupported interpreter: {0}")]
    UnsupportedInterpreter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
