//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated an operation's domain (bad stride, kernel longer
    /// than input, zero weight vector, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor shapes do not line up for the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A network specification failed validation; `layer` is the offending
    /// top-level layer index.
    #[error("invalid network spec at layer {layer}: {reason}")]
    Spec { layer: usize, reason: String },

    /// Training aborted (NaN loss, empty dataset, ...).
    #[error("training failure at epoch {epoch}, batch {batch}: {reason}")]
    Training {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    /// Dataset loading / construction problem.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Image bytes could not be decoded.
    #[error("image decode error: {0}")]
    Decode(String),

    /// Weight-file envelope is malformed (bad magic, bad header, bad layout).
    #[error("weight file format error: {0}")]
    Format(String),

    /// Weight-file version is not supported by this build.
    #[error("weight file version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },

    /// Weight-file checksum does not match its contents.
    #[error("weight file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    /// Stored tensor shapes disagree with the spec embedded in the file.
    #[error("weight file shape inconsistency: {0}")]
    ShapeInconsistency(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for data problems, 3 for numeric /
    /// training failures. Usage errors (code 1) never reach this type.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Training { .. } => 3,
            _ => 2,
        }
    }
}
