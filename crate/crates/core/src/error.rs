use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance too large for exhaustive enumeration: {n}^{m} exceeds cap {cap}")]
    InstanceTooLarge { n: usize, m: usize, cap: u64 },

    #[error("window at ({x}, {y}) of size {w}x{h} exits the {img_w}x{img_h} image")]
    OutOfBounds {
        x: f64,
        y: f64,
        w: usize,
        h: usize,
        img_w: usize,
        img_h: usize,
    },

    #[error("descriptor has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("model stage is {got}, expected {expected}")]
    StageMismatch { expected: String, got: String },

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("cannot place {requested} objects under the separation constraints (placed {placed})")]
    Placement { requested: usize, placed: usize },

    #[error("image decode error: {0}")]
    Image(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
