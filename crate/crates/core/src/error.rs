//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by evidential-regression primitives.
#[derive(Debug, Error)]
pub enum EviregError {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A computation produced or encountered a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Array or matrix dimensions do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A serialized artifact declares a version this build cannot read.
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    /// Filesystem failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed JSON, annotated with the offending field path when known.
    #[error("malformed json at `{field}`: {detail}")]
    MalformedJson { field: String, detail: String },

    /// Malformed CSV cell, annotated with 1-based row and column.
    #[error("csv parse error at row {row}, column {column}: {detail}")]
    CsvCell {
        row: usize,
        column: String,
        detail: String,
    },
}

impl EviregError {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        EviregError::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        EviregError::Numeric(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        EviregError::ShapeMismatch(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        EviregError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, EviregError>;
