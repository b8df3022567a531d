//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library.
///
/// The variants are grouped so a caller (the CLI in particular) can map them
/// onto coarse failure classes: configuration, numeric, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A data file failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A hypergraph violated a structural invariant.
    #[error("invalid hypergraph: {0}")]
    InvalidHypergraph(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A numeric procedure failed (divergence, eigensolver non-convergence).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Shape mismatch between artifacts (e.g. checkpoint vs. config).
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
