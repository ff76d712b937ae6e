use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants split along the CLI exit-code contract: malformed input
/// (`Validation`, `Parse`, `Io`, `Dimension`), mathematically undefined
/// requests (`Domain`), and numerical breakdown during fitting (`Numerical`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than by the math.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Parse { .. } | Error::Dimension(_) | Error::Io(_) | Error::Serde(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
