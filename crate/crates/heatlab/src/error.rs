//! Shared error type for the laboratory.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A point-evaluation target lies outside the meshed domain.
    #[error("point ({0}, {1}) lies outside the domain")]
    PointOutsideDomain(f64, f64),

    /// The interior dof count exceeds the configured dense-eigensolver cap.
    #[error("problem too large: {n} interior dofs exceed the cap of {cap}")]
    ProblemTooLarge { n: usize, cap: usize },

    /// Malformed external input (mesh file, function file, cache file).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Text-format parse failure with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A mesh or matrix failed its structural validation.
    #[error("validation failed: {0}")]
    Validation(String),

    /// The dyadic decomposition cannot be built (mesh too coarse for the
    /// requested scale constant).
    #[error("decomposition unavailable: {0}")]
    DecompositionUnavailable(String),

    /// A report was requested from an object missing required pieces.
    #[error("incomplete report: {0}")]
    IncompleteReport(String),

    /// Numerical failure that indicates a bug rather than bad input.
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
