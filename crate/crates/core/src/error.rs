use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("corners do not describe a cuboid: {0}")]
    DegenerateCorners(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {path} at line {line} ({record}): {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        record: String,
        message: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("tracker state error: {0}")]
    State(String),

    #[error("predictions and ground truth are misaligned: {0}")]
    Alignment(String),

    #[error("cannot aggregate an empty report")]
    EmptyReport,

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("plot error: {0}")]
    Plot(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Checkpoint(_) => 2,
            Error::Parse { .. } | Error::Alignment(_) | Error::EmptyReport => 3,
            Error::Io { .. } => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 4,
        }
    }
}
