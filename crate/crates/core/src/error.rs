use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {msg} (achieved error estimate {estimate:.3e})")]
    Numerical { msg: String, estimate: f64 },

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    /// Ball counts did not match; carries every eigenvalue that was located.
    #[error("eigenvalue extraction failed: {msg}")]
    Extraction {
        msg: String,
        eigenvalues: Vec<Complex64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(s: impl Into<String>) -> Self {
        Error::Domain(s.into())
    }
    pub(crate) fn config(s: impl Into<String>) -> Self {
        Error::Config(s.into())
    }
}
