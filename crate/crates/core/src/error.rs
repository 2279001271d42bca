use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// `Validation` covers bad inputs and contract violations (exit code 1 at the
/// CLI); everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("simulation unstable: {0}")]
    Unstable(String),
    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Usage(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
