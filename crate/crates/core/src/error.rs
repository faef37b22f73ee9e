use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed binary or text input. `offset` is the byte position where
    /// decoding gave up.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("target at frame {k} is outside the {width}x{height} frame: ({x}, {y})")]
    TargetOutOfBounds {
        k: usize,
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    #[error("region of side {side} at ({x}, {y}) does not fit frame {k}")]
    RegionOutOfBounds { k: usize, x: i64, y: i64, side: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("training diverged at stage {stage}: error {error:e} exceeds 1e6 x initial {initial:e}; try a smaller learning rate")]
    Diverged { stage: usize, error: f64, initial: f64 },

    #[error("undefined correlation: column {0} has zero variance")]
    ZeroVariance(usize),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse { offset, message: message.into() }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
