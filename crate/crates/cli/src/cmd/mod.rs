pub mod augment;
pub mod metrics;
pub mod replay;
pub mod run;
pub mod skills;

use std::fmt;
use std::process::ExitCode;

/// Failures reported on stderr. Bad input exits with 2, everything else
/// with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Failed(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

pub fn config(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn failed(e: impl fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

pub type CmdResult = Result<ExitCode, CliError>;
