use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: part {index} has spatial dims {got:?}, expected {expected:?}")]
    ConcatMismatch {
        op: &'static str,
        index: usize,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("{op}: invalid argument: {reason}")]
    InvalidArgument { op: &'static str, reason: String },

    #[error("haar transform needs even height and width, got {height}x{width}; pad the image first")]
    OddDimensions { height: usize, width: usize },

    #[error("loss node must be a scalar, got dims {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Dataset(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Failures reading or writing the binary checkpoint format.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}, not a checkpoint")]
    BadMagic([u8; 4]),

    #[error("unsupported checkpoint version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),

    #[error("checkpoint shape table disagreement: {0}")]
    ShapeTable(String),

    #[error("checkpoint entry name is not valid UTF-8")]
    BadName,

    #[error("checkpoint header: {0}")]
    Header(String),

    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn invalid(op: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
