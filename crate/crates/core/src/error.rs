use thiserror::Error;

/// Errors raised by the library.
///
/// `Argument` covers malformed inputs (shape mismatches, out-of-range
/// parameters); `Numerical` covers failures of an otherwise valid
/// computation (factorization, non-convergence, overflow).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure in {module}: {message}")]
    Numerical {
        module: &'static str,
        message: String,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn numerical(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Numerical {
            module,
            message: msg.into(),
        }
    }

    pub fn is_argument(&self) -> bool {
        matches!(self, Error::Argument(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
