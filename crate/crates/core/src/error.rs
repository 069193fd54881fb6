use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated an operation contract (shape mismatch, out-of-range
    /// slate index, misaligned batch, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid experiment configuration, reported with the offending field.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A loss or gradient stopped being finite; training aborts rather than
    /// propagating NaNs into the parameters.
    #[error("non-finite value during training: {0}")]
    NonFinite(String),

    /// Checkpoint or parameter file problems (bad magic, wrong version,
    /// truncation).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }
}
