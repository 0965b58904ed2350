use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Input is well-formed but carries no usable signal (e.g. a flat spectrum).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("npy: {0}")]
    Npy(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True when the failure stems from bad input rather than the environment
    /// or a numerical breakdown at run time.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::Shape(_)
                | Error::NonFinite(_)
                | Error::Degenerate(_)
                | Error::Npy(_)
                | Error::Parse(_)
                | Error::Csv(_)
        )
    }
}
