use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input to rate encoder at channel {channel}: {value}")]
    Encoding { channel: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("model does not fit core geometry: {0}")]
    Geometry(String),

    #[error("{path}: malformed data at byte/row {position}: {detail}")]
    Format {
        path: PathBuf,
        position: usize,
        detail: String,
    },

    #[error("artifact version mismatch: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("artifact checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Geometry(_) => 1,
            Error::Format { .. }
            | Error::Version { .. }
            | Error::Checksum { .. }
            | Error::Io { .. }
            | Error::Empty(_) => 2,
            Error::Divergence { .. } | Error::Numeric(_) => 3,
            Error::Dimension(_) | Error::Encoding { .. } | Error::OutOfRange(_) => 2,
        }
    }
}
