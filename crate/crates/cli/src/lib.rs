//! Experiment driver for the search engine: configuration, the `search`,
//! `grid`, `eval` and `plot` commands, and file emission.

use std::fmt;

pub mod commands;
pub mod config;
pub mod output;
pub mod svg;

/// Failure of a command, split by exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad configuration or usage (exit 2).
    Config(String),
    /// Anything that fails after validation (exit 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bdp_core::BdpError> for CliError {
    fn from(e: bdp_core::BdpError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
