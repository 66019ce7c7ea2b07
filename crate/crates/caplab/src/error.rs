//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("resolution too coarse: {0}")]
    Resolution(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: String) -> Self {
        Error::Domain(msg)
    }

    pub fn resolution(msg: String) -> Self {
        Error::Resolution(msg)
    }

    pub fn config(msg: String) -> Self {
        Error::Config(msg)
    }

    /// Process exit status associated with each failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Resolution(_) => 3,
            _ => 2,
        }
    }
}
