use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("no tokens survived filtering; vocabulary would be empty")]
    EmptyVocabulary,

    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),

    #[error("category path {0:?} has fewer than two levels")]
    ShallowCategory(Vec<String>),

    #[error("window larger than all documents (n = {n})")]
    WindowTooLarge { n: usize },

    #[error("cannot project empty string")]
    EmptyProjection,

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },

    #[error("topic {0:?}: every query term is out of vocabulary")]
    AllOutOfVocabulary(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no vector supplied for document {0:?}")]
    MissingDocumentVector(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training data needs at least one positive and one negative example")]
    SingleClass,

    #[error("need at least {folds} topics for {folds}-fold cross validation, got {topics}")]
    TooFewTopics { folds: usize, topics: usize },

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("model file is malformed: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<str>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().to_string(),
            line,
            message: message.into(),
        }
    }
}
