use thiserror::Error;

/// Failures of a run, each mapped to a fixed exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, malformed or inconsistent configuration, missing inputs.
    #[error("usage: {0}")]
    Usage(String),
    /// Quadrature nonconvergence, non-finite state, unusable fit.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub const EXIT_PASS: u8 = 0;
pub const EXIT_SCIENTIFIC: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<wave3_core::Error> for CliError {
    fn from(e: wave3_core::Error) -> Self {
        use wave3_core::Error as E;
        match e {
            E::Config(_) | E::Domain(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}
