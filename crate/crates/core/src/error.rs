use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants map one-to-one onto the error codes used in reports and exit
/// statuses (`E_PARSE`, `E_SCHEMA`, ...); see [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("unsupported input at byte {position}: {message}")]
    Unsupported { position: usize, message: String },

    #[error("valence violation on atom {atom} ({element}): bond order sum {bond_sum} exceeds maximum {max}")]
    Valence {
        atom: usize,
        element: String,
        bond_sum: u32,
        max: u32,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("no convergence: {0}")]
    NoConverge(String),

    #[error("unknown element {0:?} (not in vocabulary)")]
    Vocab(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dim(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "E_PARSE",
            Error::Unsupported { .. } => "E_UNSUPPORTED",
            Error::Valence { .. } => "E_VALENCE",
            Error::Schema(_) => "E_SCHEMA",
            Error::NoConverge(_) => "E_NO_CONVERGE",
            Error::Vocab(_) => "E_VOCAB",
            Error::NonFinite(_) => "E_NONFINITE",
            Error::Dim(_) => "E_DIM",
            Error::Degenerate(_) => "E_DEGENERATE",
            Error::InvalidArgument(_) => "E_ARGUMENT",
            Error::Io(_) => "E_IO",
        }
    }

    pub(crate) fn parse(position: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            position,
            message: message.into(),
        }
    }

    pub(crate) fn unsupported(position: usize, message: impl Into<String>) -> Self {
        Error::Unsupported {
            position,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
