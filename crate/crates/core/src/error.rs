//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the public API.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A computation produced or received a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Batch statistics cannot be computed (e.g. batch too small).
    #[error("batch statistics: {0}")]
    Statistics(String),

    /// The instance is too large for exhaustive enumeration.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The optimization loop failed (divergence, bad config).
    #[error("training failed: {0}")]
    Training(String),

    /// A text record could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// File contents disagree with their declared dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// Unknown or incompatible on-disk format version.
    #[error("format error: {0}")]
    Version(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
