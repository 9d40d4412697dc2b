use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor dimensions do not line up for the requested operation.
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// An operation precondition other than a shape constraint was violated.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// A primitive produced NaN or infinity from finite inputs.
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    /// A data store could not be ingested from disk.
    #[error("ingestion error at {path}: {detail}")]
    Ingestion { path: PathBuf, detail: String },

    /// Scene construction failed (e.g. placement retries exhausted).
    #[error("generation error: {0}")]
    Generation(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A checkpoint or archive file is damaged or has the wrong version.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("training aborted at step {step}: {detail}")]
    TrainingAborted { step: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract { op, detail: detail.into() }
    }

    pub fn ingestion(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Ingestion { path: path.into(), detail: detail.into() }
    }
}
