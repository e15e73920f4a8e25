use thiserror::Error;

/// Library error type. `Invalid` covers bad parameters and malformed inputs;
/// `Numeric` covers failures detected while integrating or optimizing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("numerical failure at t = {t:.6e}: {reason}")]
    Numeric { t: f64, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn numeric(t: f64, reason: impl Into<String>) -> Self {
        Error::Numeric {
            t,
            reason: reason.into(),
        }
    }
}
