use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the surrogate pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter count {count} outside the allowed range [{min}, {max}]")]
    ParameterBudget { count: usize, min: usize, max: usize },

    #[error("bad magic in {what}: expected {expected:?}")]
    BadMagic { what: &'static str, expected: String },

    #[error("unsupported {what} version {found} (expected {expected})")]
    VersionMismatch {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("architecture fingerprint mismatch: checkpoint {found:016x}, expected {expected:016x}")]
    FingerprintMismatch { found: u64, expected: u64 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("corrupt tensor file: {0}")]
    CorruptTensor(String),

    #[error("generator produced a non-finite value for sample {sample_id}: {detail}")]
    Generator { sample_id: usize, detail: String },

    #[error("reversed flow at station {station}, radial index {radial}: ring weight sum {weight}")]
    ReversedFlow {
        station: usize,
        radial: usize,
        weight: f64,
    },

    #[error("polytropic efficiency undefined: total temperature ratio is 1")]
    UndefinedEfficiency,

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error("sample {sample_id}: {source}")]
    SampleIo {
        sample_id: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
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
