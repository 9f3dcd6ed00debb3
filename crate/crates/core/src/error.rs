use std::path::PathBuf;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two operands had incompatible shapes.
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    /// Invalid configuration value.
    #[error("configuration error: {0}")]
    Config(String),
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Malformed input file.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    /// Input data is missing a required column.
    #[error("schema error: column `{0}` not found")]
    Schema(String),
    /// Not enough history to build a forecast window.
    #[error("planning error: {message} (required {required} hours, available {available})")]
    Planning {
        message: String,
        required: usize,
        available: usize,
    },
    /// Checkpoint content did not match its stored checksum.
    #[error("checksum mismatch in {0}")]
    Checksum(String),
    /// Unsupported file format version.
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    /// File ended before all declared content was read.
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    /// A checkpoint or bundle does not fit the requested configuration.
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    /// Training produced a NaN or infinity.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

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

pub type Result<T> = std::result::Result<T, Error>;
