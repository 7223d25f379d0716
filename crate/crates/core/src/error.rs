use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch between paths")]
    GridMismatch,

    #[error("cone is not proper: {0}")]
    NotProper(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate dual section: dual generator {index} has vanishing first coordinate")]
    DegenerateSection { index: usize },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
