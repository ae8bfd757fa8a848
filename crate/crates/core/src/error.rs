use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{0}: no data rows")]
    NoRows(PathBuf),
    #[error("series has no channel named `{0}`")]
    MissingChannel(String),
    #[error("invalid channel spec: {0}")]
    ChannelSpec(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },
    #[error("backward called before a train-mode forward pass")]
    NoForwardCache,
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("latent width rounds to {0}; bottleneck must be at least one unit")]
    UnusableBottleneck(i64),
    #[error("layer count mismatch: expected {expected} recurrent layers, found {actual}")]
    LayerCount { expected: usize, actual: usize },
    #[error("missing baseline record: {0}")]
    MissingBaseline(&'static str),
    #[error("undefined statistic: {0}")]
    Undefined(String),
    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("manifest field `{field}`: {reason}")]
    Manifest { field: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
