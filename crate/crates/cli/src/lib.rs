//! Library half of the `elicit` binary: configuration and the batch commands.

pub mod commands;
pub mod config;

use std::fmt;

pub use config::ExperimentConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or invalid configuration, unusable address or log.
    Config(String),
    /// Output could not be written.
    Io(std::io::Error),
    /// A computation failed part-way.
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) | CliError::Compute(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(e) => write!(f, "I/O error: {e}"),
            CliError::Compute(m) => write!(f, "computation failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<elicit_core::Error> for CliError {
    fn from(e: elicit_core::Error) -> Self {
        CliError::Compute(e.to_string())
    }
}
