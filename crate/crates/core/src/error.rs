use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("failed to parse configuration {path}: {reason}")]
    ConfigParse { path: PathBuf, reason: String },

    /// Every candidate processing node is masked (depleted UAVs, no relay).
    #[error("no feasible processing node")]
    NoFeasibleNode,

    #[error("action index {index} out of range for catalogue of size {size}")]
    ActionOutOfRange { index: usize, size: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid placement decision: {0}")]
    InvalidDecision(String),

    #[error("episode has no remaining tasks")]
    EpisodeFinished,

    #[error("unknown task id {0}")]
    UnknownTask(usize),

    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedRecord {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("missing pre-trained agent artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("bad agent parameter file {}: {reason}", .path.display())]
    ParamFormat { path: PathBuf, reason: String },

    #[error("summary is missing methods: {}", .0.join(", "))]
    MissingMethods(Vec<String>),

    #[error("invalid experiment plan: {0}")]
    Plan(String),

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
