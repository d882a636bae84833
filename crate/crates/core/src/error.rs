//! Error type shared across the crate.

use std::path::PathBuf;

use crate::model::ValidationReport;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for dataset handling, metric evaluation, clustering
/// and model fitting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter was outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Two feature vectors (or sequences of them) had different dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A sub-trajectory or trajectory violated a structural invariant.
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    /// Dataset-level validation found one or more issues.
    #[error("dataset validation failed:\n{0}")]
    Validation(ValidationReport),

    /// The affinity matrix has no usable off-diagonal structure.
    #[error("degenerate affinity: {0}")]
    DegenerateAffinity(String),

    /// The eigensolver failed to converge or produced unusable output.
    #[error("eigensolver failure: {0}")]
    Eigen(String),

    /// Every k-means restart terminated with an empty cluster.
    #[error("k-means could not produce {k} non-empty clusters from {n} points")]
    EmptyCluster { k: usize, n: usize },

    /// Too few rows to fit a linear model of the requested width.
    #[error("too few training rows: {rows} rows for {features} features (need at least {required})")]
    TooFewRows {
        rows: usize,
        features: usize,
        required: usize,
    },

    /// A file did not conform to the expected on-disk format.
    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// Stored checksum did not match the recomputed one.
    #[error("checksum mismatch in {path}: header says {stored}, data hashes to {computed}")]
    Checksum {
        path: PathBuf,
        stored: String,
        computed: String,
    },

    /// Underlying I/O failure, annotated with the path involved.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
