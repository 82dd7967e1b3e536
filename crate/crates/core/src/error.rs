use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, IdfError>;

#[derive(Debug, Error)]
pub enum IdfError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format in {path}: {detail}")]
    UnsupportedImage { path: PathBuf, detail: String },

    #[error("image codec error on {path}: {detail}")]
    Codec { path: PathBuf, detail: String },

    #[error("path {0} escapes the working tree")]
    PathOutsideSandbox(PathBuf),

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("weight file CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },

    #[error("tensor `{name}` has shape {found:?}, config expects {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("dataset {0} contains no usable images")]
    EmptyDataset(PathBuf),

    #[error("tape was already consumed by a previous backward pass")]
    TapeInvalidated,
}

impl IdfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IdfError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, IdfError::Io { .. })
    }
}
