use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty text at line {line}")]
    EmptyText { line: usize },

    #[error("duplicate id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("text yields no tokens after normalization")]
    NoTokens,

    #[error("not a model file")]
    BadMagic,

    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("unexpected end of file in section {section}")]
    Truncated { section: &'static str },

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("queries without a relevant corpus document: {}", .0.join(", "))]
    UnlinkedQueries(Vec<String>),

    #[error("missing context for keep-set method {method}: {what}")]
    MissingContext { method: String, what: String },

    #[error("unknown document id {0:?}")]
    UnknownDocument(String),

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
