use std::process::ExitCode;

use lz_landscape::LzError;

/// Failure classes with their stable process exit codes.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Self::Invalid(_) => 2,
            Self::Numerical(_) => 3,
            Self::Io(_) => 4,
        })
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Invalid(m) => write!(f, "invalid input: {m}"),
            Self::Numerical(m) => write!(f, "numerical abort: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<LzError> for CliError {
    fn from(e: LzError) -> Self {
        match e {
            LzError::NumericalAbort { .. } | LzError::NonFinite(_) => Self::Numerical(e.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}

pub fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

pub type CliResult<T> = Result<T, CliError>;
