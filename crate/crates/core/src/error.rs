use std::path::PathBuf;

use crate::env::Status;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid range [{lo}, {hi}]: lower bound must be below upper bound")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("episode already terminated with status {0:?}")]
    EpisodeTerminated(Status),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("model contains a non-finite value in {0}")]
    NonFiniteParameter(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("latitude {0} outside the supported envelope")]
    LatitudeOutOfRange(f64),

    #[error("non-finite loss in update {update}, epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss {
        update: usize,
        epoch: usize,
        minibatch: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// An I/O failure on `path`.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
