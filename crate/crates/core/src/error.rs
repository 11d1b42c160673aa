use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text; `line` is 1-based and counts the header.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A documented precondition of an operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid detector configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input is numerically degenerate (zero variance, empty histogram, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Not enough history or samples for the requested operation.
    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
