use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// The variants line up with the CLI exit-code contract: input problems,
/// failed channel verification, and structural inconsistencies found while
/// decomposing a verified system.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("map is not completely positive (minimal Choi eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("structural inconsistency: {0}")]
    Structure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }

    /// True for errors caused by the input itself rather than by the analysis.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_) | Error::InvalidInput(_) | Error::Parse(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
