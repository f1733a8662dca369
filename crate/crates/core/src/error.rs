use thiserror::Error;

/// Errors raised by kernel evaluation, quadrature and the lattice solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A kernel was evaluated at (or numerically at) its singular point.
    #[error("kernel singularity: |x| = {norm:e} is below the guard {guard:e}")]
    Singular { norm: f64, guard: f64 },

    /// The requested combination is valid mathematically but not implemented.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A quadrature failed to reach its tolerance.
    #[error("quadrature did not converge: {what} (value {value:e}, error estimate {error:e})")]
    NonConvergence { what: String, value: f64, error: f64 },

    /// A time step produced NaN or infinite mode amplitudes.
    #[error("non-finite state at t = {t}: {detail}")]
    NonFinite { t: f64, detail: String },

    /// Lattice, probe or model settings that cannot produce a valid run.
    #[error("configuration error: {0}")]
    Config(String),

    /// Exponent fit refused (too few lags, degenerate moments, ...).
    #[error("fit refused: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
