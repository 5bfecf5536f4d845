use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the annotation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown entity label `{label}`")]
    UnknownLabel { line: usize, label: String },

    #[error("session file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("malformed session file: {0}")]
    CorruptSession(String),

    #[error("invalid label sequence: {0}")]
    InvalidLabels(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("noun phrase `{surface}` not found; nearest matches: {}", nearest.join(", "))]
    SeedNotFound {
        surface: String,
        nearest: Vec<String>,
    },

    #[error("degenerate IDF: weighting scheme {scheme} needs at least 2 noun phrases, found {found}")]
    DegenerateIdf { scheme: &'static str, found: usize },

    #[error("no model trained yet; bootstrap the session with confirmed seed entities first")]
    NoModel,

    #[error("no unlabeled sentences remain in the pool")]
    PoolExhausted,

    #[error("label submission rejected: {0}")]
    Rejected(String),

    #[error("sentence {0} has no gold annotation")]
    MissingGold(usize),

    #[error("requested sequence rank {rank} but only {available} sequences exist")]
    RankOutOfRange { rank: usize, available: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
