use std::fmt;

use fwlab::Error;

use crate::config::ConfigError;

/// Failure classes, one per exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Verification(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Domain(_)
            | Error::Unsupported(_)
            | Error::OutOfRegime(_)
            | Error::Precondition(_)
            | Error::DomainTooSmall { .. }
            | Error::SymbolDegenerate { .. }
            | Error::Singularity { .. }
            | Error::Grid(_) => CliError::Config(msg),
            Error::Verification(_) | Error::NonMonotone { .. } => CliError::Verification(msg),
            Error::Accuracy { .. }
            | Error::NumericalBlowup { .. }
            | Error::NonConvergence { .. }
            | Error::Divergence { .. }
            | Error::Cfl { .. } => CliError::Numerical(msg),
        }
    }
}
