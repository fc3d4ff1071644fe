use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("empty knowledge base")]
    EmptyKnowledgeBase,

    #[error("invalid triple: {0}")]
    InvalidTriple(String),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("undefined similarity: zero vector")]
    ZeroVector,

    #[error("non-finite embedding value at index {index}")]
    NonFinite { index: usize },

    #[error("cannot embed empty text")]
    EmptyText,

    #[error("unknown key: {0:?}")]
    UnknownKey(String),

    /// Failure talking to a remote embedding service. Safe to retry.
    #[error("transport error: {0}")]
    Transport(String),

    #[error("while scoring {triple}: {source}")]
    Scoring {
        triple: String,
        #[source]
        source: Box<Error>,
    },

    #[error("separator {sep:?} occurs inside triple field {field:?}")]
    SeparatorInField { sep: String, field: String },

    #[error("unfilled placeholder {0}")]
    UnfilledPlaceholder(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("image embeddings required")]
    MissingImageEmbeddings,

    #[error("training diverged at step {step}")]
    Diverged { step: usize },

    #[error("no predictions")]
    NoPredictions,

    #[error("unknown query id {0:?}")]
    UnknownQuery(String),

    #[error("duplicate query id {0:?}")]
    DuplicateQuery(String),

    #[error("query {0:?} has no gold answer")]
    MissingGold(String),

    #[error("query {query:?} under config {config}: {source}")]
    Bench {
        query: String,
        config: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn is_retriable(&self) -> bool {
        match self {
            Error::Transport(_) => true,
            Error::Scoring { source, .. } | Error::Bench { source, .. } => source.is_retriable(),
            _ => false,
        }
    }
}
