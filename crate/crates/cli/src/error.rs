use std::process::ExitCode;

use thiserror::Error;

/// Failures mapped onto the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, configuration or input values.
    #[error("{0}")]
    Validation(String),
    /// IO or numerical failure while running.
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
    /// A verification check did not pass.
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    /// Core errors describe invalid inputs, so they count as validation
    /// failures unless a command wraps them otherwise.
    pub fn from_core(e: lambertpo_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Validation(_) => ExitCode::from(1),
            CliError::Runtime(_) => ExitCode::from(2),
            CliError::Verification(_) => ExitCode::from(3),
        }
    }
}
