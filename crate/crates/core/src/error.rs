//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dataset file could not be parsed. Carries the 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// I/O failure while reading a dataset.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A matrix argument violated a structural precondition
    /// (non-finite entries, asymmetry, shape mismatch).
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// A factorization hit a nonpositive pivot; the matrix is not
    /// positive definite.
    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dense-only operation was requested above the dimension cap.
    #[error("dimension {d} exceeds dense cap {cap}")]
    DenseCap { d: usize, cap: usize },

    /// An undefined quantity was requested (e.g. relative error of a
    /// zero matrix).
    #[error("undefined: {0}")]
    Undefined(String),
}
