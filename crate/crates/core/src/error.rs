use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {chunk} chunk: {detail}")]
    Format { chunk: String, detail: String },

    #[error("unsupported audio encoding ({found}); supported: PCM 16-bit, IEEE float 32-bit, mono or stereo")]
    UnsupportedFormat { found: String },

    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status: 2 invalid input or configuration, 3 data or
    /// file problems, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) | Error::Shape(_) | Error::Config(_) => 2,
            Error::Io { .. }
            | Error::Format { .. }
            | Error::UnsupportedFormat { .. }
            | Error::Parse { .. }
            | Error::Data(_) => 3,
            Error::Numeric(_) => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(chunk: &str, detail: impl Into<String>) -> Self {
        Error::Format {
            chunk: chunk.to_string(),
            detail: detail.into(),
        }
    }
}
