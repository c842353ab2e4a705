use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("leaf is not recorded on this tape")]
    UnrecordedLeaf,

    #[error("conditioning mismatch: {0}")]
    ConditioningMismatch(String),

    #[error("stage mismatch: {0}")]
    StageMismatch(String),

    #[error("numeric divergence: {what} = {value} at epoch {epoch}")]
    Divergence {
        what: &'static str,
        value: f64,
        epoch: usize,
    },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: malformed row: {msg}", .file.display())]
    MalformedRow {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}:{line}: dimension mismatch: expected {expected} values, found {found}", .file.display())]
    DimensionMismatch {
        file: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{}: class {class} listed as both seen and unseen", .file.display())]
    OverlappingPartition { file: PathBuf, class: u32 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unknown label {0}")]
    UnknownLabel(u32),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
