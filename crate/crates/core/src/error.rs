//! Error type shared across the library.
//!
//! Variants are grouped by how the caller should react: `Contract` and
//! `Degenerate` indicate invalid arguments, `Ingest`/`NotFound`/`Io` indicate
//! bad or missing input data, and `Numeric` indicates a failure of the
//! computation itself (non-finite values, non-convergence, rank deficiency).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates an operation's contract (shape mismatch,
    /// out-of-range index, unknown symbol).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input is structurally valid but degenerate for the requested
    /// operation (empty sequence, zero vector, constant column).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A referenced entity does not exist.
    #[error("not found: {0}")]
    NotFound(String),

    /// A data file could not be parsed or is internally inconsistent.
    #[error("ingestion error: {0}")]
    Ingest(String),

    /// The computation produced non-finite values, failed to converge,
    /// or hit a rank-deficient system.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
    pub fn not_found(msg: impl Into<String>) -> Self {
        Error::NotFound(msg.into())
    }
    pub fn ingest(msg: impl Into<String>) -> Self {
        Error::Ingest(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}
