use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty cloud: no valid depth pixels")]
    EmptyCloud,
    #[error("empty view list")]
    NoViews,
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("need at least {needed} samples, got {available}")]
    TooFewSamples { needed: usize, available: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("missing forward cache")]
    MissingForwardCache,
    #[error("empty instance")]
    EmptyInstance,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("rank deficient: {0}")]
    RankDeficient(&'static str),
    #[error("class {class_id} not detected: {points} points")]
    NotDetected { class_id: u32, points: usize },
    #[error("cannot place objects after {0} attempts")]
    CannotPlaceObjects(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
