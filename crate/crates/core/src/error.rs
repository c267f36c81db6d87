use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("no document has at least {k} tokens ({skipped} skipped)")]
    NoEligiblePrompts { k: usize, skipped: usize },

    #[error("vocabulary requires at least one non-empty text stream")]
    EmptyVocabularyInput,

    #[error("token id {0} is not in the vocabulary")]
    UnknownTokenId(u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Metric(String),

    #[error("selection failed: {0}")]
    Selection(String),

    #[error("runs are not comparable: field `{field}` differs ({left} vs {right})")]
    MismatchedRuns {
        field: &'static str,
        left: String,
        right: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Model(#[from] crate::model::ModelError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
