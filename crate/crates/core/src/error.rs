use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical and learning routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not positive definite (last jitter tried: {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("basis is not orthonormal (‖BᵀB − I‖_F = {0:e})")]
    NotOrthonormal(f64),

    #[error("reference matrix has zero Frobenius norm")]
    ZeroReference,

    #[error("weight entry {index} is negative ({value})")]
    NonnegViolation { index: usize, value: f64 },

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("coordinate {0} appears twice in one monomial (multilinear terms only)")]
    DuplicateIndex(usize),

    #[error("mixing parameter alpha = {0} is outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("closed-form Hermite coordinate weights exist only for p in {{1, 2}}, got p = {0}")]
    UnsupportedP(usize),

    #[error("data source produced no samples")]
    EmptyDataSource,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
