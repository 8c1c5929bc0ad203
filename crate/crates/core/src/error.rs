use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("no samples")]
    NoSamples,

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix data length {len} does not match shape {rows}x{cols}")]
    Shape { rows: usize, cols: usize, len: usize },

    #[error("non-finite values at rows {rows:?} (first at row {row}, col {col})")]
    NonFinite {
        rows: Vec<usize>,
        row: usize,
        col: usize,
    },

    #[error("non-PSD after regularization: eigenvalue {eigenvalue:e} (index {index}) with epsilon {epsilon:e}")]
    NonPsd {
        index: usize,
        eigenvalue: f64,
        epsilon: f64,
    },

    #[error(
        "symmetric eigensolver did not converge within {max_iterations} iterations \
         (dim {dim}, frobenius norm {norm:e}, diagonal range [{diag_min:e}, {diag_max:e}])"
    )]
    NoConvergence {
        dim: usize,
        max_iterations: usize,
        norm: f64,
        diag_min: f64,
        diag_max: f64,
    },

    #[error("epsilon mismatch: reference model uses {reference:e}, evaluation model uses {evaluation:e}")]
    EpsilonMismatch { reference: f64, evaluation: f64 },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("undefined (zero denominator)")]
    ZeroDenominator,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("not an EMB1 file")]
    NotEmb1,

    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("corrupt or version-skewed model: {0}")]
    CorruptModel(String),

    #[error("{0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input data).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonPsd { .. } | Error::NoConvergence { .. } | Error::ZeroDenominator
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
