use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("term surface is empty after canonicalization")]
    EmptyTerm,

    #[error("self-loop edge on term `{0}`")]
    SelfLoop(String),

    #[error("{path}: no terms found")]
    EmptyTerminology { path: PathBuf },

    #[error("{path}: row {row} has {columns} column(s), expected {expected}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        columns: usize,
        expected: &'static str,
    },

    #[error("{path}: self-loop edges on row(s) {rows:?}")]
    SelfLoopRows { path: PathBuf, rows: Vec<usize> },

    #[error("invalid prompt template `{name}`: {reason}")]
    InvalidTemplate { name: String, reason: String },

    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),

    #[error("expected exactly one mask literal `{mask}` in `{sentence}`, found {found}")]
    MaskCount {
        mask: String,
        sentence: String,
        found: usize,
    },

    #[error("backend `{backend}` does not support {capability}")]
    Unsupported {
        backend: String,
        capability: &'static str,
    },

    #[error("token position {position} out of range for sentence of {len} token(s)")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("token id {0} is outside the vocabulary")]
    InvalidTokenId(u32),

    #[error("cannot score an empty sentence")]
    EmptySentence,

    #[error("invalid backend: {0}")]
    InvalidBackend(String),

    #[error("mock table {path}, line {line}: {reason}")]
    MockTable {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("{method} is inapplicable: {reason}")]
    Inapplicable { method: String, reason: String },

    #[error("terminology needs at least 2 terms for scored selection, got {0}")]
    TerminologyTooSmall(usize),

    #[error("top-k must be at least 1")]
    ZeroK,

    #[error("gold taxonomy is empty")]
    EmptyGold,

    #[error("nothing to average")]
    NothingToAverage,

    #[error("empty frequency pattern")]
    EmptyPattern,

    #[error("backend error: {0}")]
    Backend(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
