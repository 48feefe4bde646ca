use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    WeightFile(#[from] WeightFileError),

    #[error("malformed dataset line {line}: {detail}")]
    Dataset { line: usize, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Failures while decoding a weight file. No partially built model is ever returned.
#[derive(Debug, Error)]
pub enum WeightFileError {
    #[error("bad magic bytes {found:?}, expected \"GKW1\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported weight format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("file truncated while reading {context}")]
    Truncated { context: String },

    #[error("config blob is not valid: {0}")]
    Config(String),

    #[error("tensor {name}: {detail}")]
    Inconsistent { name: String, detail: String },

    #[error("{0} trailing bytes after last tensor")]
    TrailingBytes(usize),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
