use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A state-action pair was never visited, so the induced model has no
    /// row for it.
    #[error("induced model incomplete: pair (s={s}, u={u}) was never visited")]
    ModelIncomplete { s: usize, u: usize },

    #[error("conditioning on a zero-probability event: {0}")]
    Conditioning(String),

    #[error("window buffer not ready: {0}")]
    NotReady(String),

    #[error("invalid {path}: {message}")]
    Validation { path: String, message: String },

    #[error("bound not applicable: {0}")]
    InapplicableBound(String),

    #[error("ergodicity requirement failed: {0}")]
    Ergodicity(String),

    #[error("enumeration too large: {0}")]
    Size(String),

    #[error("environment fault at step {step}: {source}")]
    Environment {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
