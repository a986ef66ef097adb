use thiserror::Error;

/// Errors raised by the solvers, channel synthesis and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a documented precondition (shape, modulus, membership).
    #[error("validation error: {0}")]
    Validation(String),

    /// An iterative kernel failed to converge or hit a singular system.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A scenario configuration could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A solver stage inside the alternating loop failed.
    #[error("{stage} stage failed: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
