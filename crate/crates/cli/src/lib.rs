//! Scenario files, batch runs and metric export for the robust CBF filter.

pub mod commands;
pub mod config;
mod error;

pub use commands::{run_command, trace_command, Mode, RunOptions, RunReport, SummaryJson};
pub use config::{load_config, parse_config};
pub use error::{CliError, ConfigError};
