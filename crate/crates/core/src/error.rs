use thiserror::Error;

/// Errors raised by the library.
///
/// The variants follow the failure classes the command-line tool maps onto
/// exit codes: configuration problems, API misuse, numerical breakdown and
/// I/O or format problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("numerical failure: {what} (step {step})")]
    Numerical { what: String, step: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn numerical(what: impl Into<String>, step: usize) -> Self {
        Error::Numerical { what: what.into(), step }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
