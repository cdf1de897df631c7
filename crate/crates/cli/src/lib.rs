//! Command-line front end: configuration files, CSV and SVG output, and the
//! subcommands of the `bellnav` binary.

pub mod commands;
pub mod config;
pub mod plot;
pub mod table;

use thiserror::Error;

pub use config::RunConfig;

/// Exit status of the binary.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const VALIDATION: i32 = 1;
    pub const PARTIAL: i32 = 2;
    pub const CONFIG: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    /// An oracle or validation check failed.
    #[error("validation failed: {0}")]
    Validation(String),
    /// A sweep finished but some points did not converge.
    #[error("partial sweep: {0}")]
    Partial(String),
    #[error(transparent)]
    Core(#[from] bellnav::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// The message without the category prefix.
    pub fn message(&self) -> String {
        match self {
            Self::Config(m) | Self::Validation(m) | Self::Partial(m) => m.clone(),
            other => other.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Core(bellnav::Error::Config(_)) => exit::CONFIG,
            Self::Partial(_) => exit::PARTIAL,
            _ => exit::VALIDATION,
        }
    }
}
