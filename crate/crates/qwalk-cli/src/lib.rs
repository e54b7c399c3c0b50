//! Library side of the `qwalk` command-line tool: configuration handling,
//! orchestration of the engine modules, and emission of tables, JSON, CSV
//! and SVG charts.

pub mod chart;
pub mod config;
pub mod output;
pub mod run;

/// Tool errors split by exit code: configuration problems exit with 2,
/// computation problems with 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Computation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Computation(_) => 3,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Computation(msg) => write!(f, "computation error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qwalk_core::Error> for CliError {
    fn from(e: qwalk_core::Error) -> Self {
        CliError::Computation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Computation(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
