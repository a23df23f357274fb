//! Experiment runner for the `optiloop` simulator: config loading, the
//! individual commands, parameter sweeps and the fixed experiment suite.

pub mod config;
pub mod output;
pub mod run;
pub mod suite;

pub use config::{Command, ExperimentConfig};
pub use output::{Artifacts, Table};
pub use run::run;
pub use suite::run_paper_suite;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] optiloop::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// Stable snake_case name for scripts.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config_invalid",
            CliError::Engine(e) => e.category(),
            CliError::Io(_) | CliError::Csv(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Engine(optiloop::Error::InvalidConfig(_)) => 2,
            CliError::Io(_) | CliError::Csv(_) => 3,
            CliError::Engine(_) => 1,
        }
    }
}
