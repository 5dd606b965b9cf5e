use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("stale forward cache: parameters changed since the forward pass")]
    StaleCache,

    #[error("input jacobian requested in training mode")]
    TrainingModeJacobian,

    #[error("unsupported network layout: {0}")]
    UnsupportedLayout(String),

    #[error("point is not on the skin surface (residual {residual:.3e})")]
    OffSurface { residual: f64 },

    #[error("demo region rejected: {0}")]
    InvalidRegion(String),

    #[error("graph is disconnected: component sizes {sizes:?}")]
    DisconnectedGraph { sizes: Vec<usize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal of length {len} is shorter than the filter warm-up ({min})")]
    SignalTooShort { len: usize, min: usize },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("zero variance in ground truth (dimension {dim})")]
    ZeroVariance { dim: usize },

    #[error("training diverged at iteration {iter}: {detail}")]
    Divergence { iter: usize, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
