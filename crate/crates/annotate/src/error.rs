use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};

pub type Result<T, E = AnnotateError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("journal line {line}: {message}")]
    Journal { line: usize, message: String },

    #[error("no pool for user `{0}`")]
    MissingPool(String),

    #[error("pool for user `{user_id}` holds {size} tweets, more than 100")]
    PoolTooLarge { user_id: String, size: usize },

    #[error("pair ({user_id}, {statement_id}) is already in a batch")]
    DuplicatePair { user_id: String, statement_id: String },

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("unknown batch `{0}`")]
    UnknownBatch(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("task `{task_id}` is not assigned to `{annotator}`")]
    WrongAnnotator { task_id: String, annotator: String },

    #[error("task `{0}` already has a label")]
    AlreadyLabeled(String),

    #[error("`{annotator}` reached the daily cap of {cap} labels; resets at {resets_at}")]
    DailyCap {
        annotator: String,
        cap: usize,
        resets_at: DateTime<Utc>,
    },

    #[error("{} pairs are not final: {}", .0.len(), list_pairs(.0))]
    Unfinished(Vec<(String, String)>),

    #[error("config error: {0}")]
    Config(String),
}

fn list_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(u, s)| format!("({u}, {s})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl AnnotateError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        AnnotateError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
