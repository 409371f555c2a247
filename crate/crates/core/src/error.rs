use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate event: session {session} ordinal {ordinal}")]
    DuplicateEvent { session: String, ordinal: u64 },

    #[error("text is empty after normalization")]
    EmptyText,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("feature layout mismatch: {0}")]
    Layout(String),

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("no impression contains a sale; MRR of sale is undefined")]
    NoSales,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing prerequisite artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("config hash mismatch in {artifact}: expected {expected}, found {found}")]
    ConfigHashMismatch {
        artifact: PathBuf,
        expected: String,
        found: String,
    },

    #[error("leakage guard: {0}")]
    Leakage(String),

    #[error("variant {variant}: {source}")]
    Variant {
        variant: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::Variant { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
