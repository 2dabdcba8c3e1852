use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("check failed: {0}")]
    Check(String),

    #[error("runtime error: {0}")]
    Runtime(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

/// Parameter problems are configuration errors; everything the engines
/// report while running is a runtime error.
impl From<entrydyn::Error> for CliError {
    fn from(e: entrydyn::Error) -> Self {
        use entrydyn::Error as E;
        match e {
            E::InvalidParameter { .. } | E::TooManyAgents { .. } | E::UnsupportedModel => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<entrydyn::FitError> for CliError {
    fn from(e: entrydyn::FitError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
