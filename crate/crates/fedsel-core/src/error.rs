//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments (bad shapes, out-of-range values).
    #[error("configuration error: {0}")]
    Config(String),

    /// A partition could not be constructed as requested.
    #[error("partition error: {0}")]
    Partition(String),

    /// Scalar projection onto a zero-norm global direction is undefined.
    #[error("projection undefined: global direction has zero norm")]
    ProjectionUndefined,

    /// A score was requested for an arm that has never been pulled.
    #[error("arm {0} has never been pulled")]
    UnpulledArm(usize),

    /// Internal contract violation (caller bug).
    #[error("logic error: {0}")]
    Logic(String),

    /// Requested feature is not available for this task (e.g. regret proxy
    /// without oracle utilities).
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn partition(msg: impl Into<String>) -> Self {
        Error::Partition(msg.into())
    }

    pub(crate) fn logic(msg: impl Into<String>) -> Self {
        Error::Logic(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
