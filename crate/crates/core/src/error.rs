use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by graph learning, data generation and evaluation.
///
/// Node indices carried by variants are 0-based; the `Display` output
/// reports them 1-based, matching the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("diagonal entry ({}, {}) is nonzero", .0 + 1, .0 + 1)]
    NonZeroDiagonal(usize),

    #[error("entry ({}, {}) is not finite", .0 + 1, .1 + 1)]
    NonFinite(usize, usize),

    #[error("a graph needs at least 2 nodes")]
    TooFewNodes,

    #[error("dimension mismatch: expected {expected}, got {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("invalid node split: {0}")]
    InvalidSplit(String),

    #[error("covariance matrix is not symmetric positive definite")]
    NotSpd,

    #[error("model is singular: I - W is not invertible")]
    SingularModel,

    #[error("could not draw a stable community graph after {0} attempts")]
    UnstableGraph(usize),

    #[error("invalid quadratic coefficients a={a}, b={b}, c={c}")]
    InvalidQuadratic { a: f64, b: f64, c: f64 },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("all points coincide; the kernel normalizer is zero")]
    DegenerateGeometry,

    #[error("target signals have zero energy")]
    ZeroTargetEnergy,

    #[error("true graph has zero Frobenius norm")]
    ZeroTrueGraph,

    #[error("partition would be empty")]
    EmptyPartition,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
