use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("essay `{id}` has relevance {level} outside [{min}, {max}] for task `{task}`")]
    LevelOutOfRange {
        id: String,
        task: String,
        level: i64,
        min: i64,
        max: i64,
    },

    #[error("essay `{0}` has no relevance level")]
    Unlabeled(String),

    #[error("essay `{id}` belongs to task `{found}`, expected `{expected}`")]
    WrongTask {
        id: String,
        found: String,
        expected: String,
    },

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("fold {fold}: id `{id}` appears in both {first} and {second}")]
    FoldOverlap {
        fold: u32,
        id: String,
        first: &'static str,
        second: &'static str,
    },

    #[error("no embedding for id `{0}`")]
    MissingEmbedding(String),

    #[error("dimension mismatch{}: expected {expected}, found {found}", .id.as_ref().map(|i| format!(" for `{i}`")).unwrap_or_default())]
    Dimension {
        id: Option<String>,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("remote encoder unreachable at {endpoint}: {message}")]
    Connection { endpoint: String, message: String },

    #[error("remote encoder protocol error: {0}")]
    Protocol(String),

    #[error("no negative levels eligible for anchor level {anchor} under the `{strategy}` strategy in [{min}, {max}]; choose a different sampling strategy")]
    NoEligibleLevels {
        anchor: i64,
        strategy: String,
        min: i64,
        max: i64,
    },

    #[error("no level has enough essays to act as an anchor")]
    NoAnchors,

    #[error("every relevance level is empty")]
    EmptyModel,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Connection failures may succeed on retry; everything else is fatal.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Connection { .. })
    }
}
