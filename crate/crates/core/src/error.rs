//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI reports them: configuration problems,
//! data problems, and numeric aborts each map to a distinct exit code;
//! everything else is an internal/contract failure.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the named operation.
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An API contract was violated (bad call order, out-of-domain argument).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Configuration is malformed or internally inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Input data is malformed, missing, or infeasible to generate.
    #[error("data error: {0}")]
    Data(String),

    /// A non-finite value or other numeric abort condition was hit.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A structured text file failed to parse at a known line (1-based).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A registry or parameter lookup failed.
    #[error("unknown key '{key}'; available: [{}]", available.join(", "))]
    MissingKey {
        key: String,
        available: Vec<String>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor for contract violations.
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Convenience constructor for config errors.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Convenience constructor for data errors.
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Convenience constructor for numeric errors.
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data(format!("JSON serialization failed: {e}"))
    }
}
