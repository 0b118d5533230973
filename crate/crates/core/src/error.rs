//! Crate-wide error type.
//!
//! Variants are grouped by what the caller can do about them: `Parameter`
//! and `Dimension` mean the inputs were wrong, `Format` and `Metadata` mean
//! a file on disk was wrong, `Degenerate` means the numerics gave up.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("missing metadata: {0}")]
    Metadata(String),

    #[error("degenerate solve: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
