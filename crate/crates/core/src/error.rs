use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported modulation order: {0} bits per symbol (expected one of 2, 4, 6, 8)")]
    UnsupportedModulationOrder(u32),

    #[error("index {index} out of range for alphabet of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("degenerate prior: zero probability mass on the masked set of pattern {pattern}")]
    DegeneratePrior { pattern: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {what} is not finite")]
    Divergence {
        epoch: usize,
        batch: usize,
        what: &'static str,
    },

    #[error("malformed dataset at byte offset {offset}: {reason}")]
    MalformedDataset { offset: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
