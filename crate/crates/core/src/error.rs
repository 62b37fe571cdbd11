use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id `{id}` at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("index holds {size} items but k = {k}")]
    IndexTooSmall { size: usize, k: usize },

    #[error("template `{template}` is missing variable `{var}`")]
    MissingVar { template: String, var: String },

    #[error("template `{template}` references unknown placeholder `{placeholder}`")]
    UnknownPlaceholder {
        template: String,
        placeholder: String,
    },

    #[error("no mock rule matches prompt (sha256 {prompt_hash})")]
    NoMockRule { prompt_hash: String },

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("training data must contain both classes")]
    SingleClass,

    #[error("need at least {needed} examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },

    #[error("all tweets fell in the borderline band; no labels produced")]
    AllBorderline,

    #[error("method `{method}` does not cover the same (user, statement) pairs as `{reference}`")]
    PairSetMismatch { method: String, reference: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
