use std::fmt;

/// Errors raised while decoding one of the on-disk formats.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated {what}: expected {expected} bytes, got {got}")]
    Truncated {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("trailing data: {0} unexpected bytes after payload")]
    TrailingBytes(usize),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("generation failed for class {class:?} (user {user}, scene {scene}) after {attempts} attempts")]
    Generation {
        class: String,
        user: String,
        scene: String,
        attempts: usize,
    },
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(#[from] FormatError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl fmt::Display, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_string(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
