//! Configurable experiment runner behind the command-line tool.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind, Overrides};
pub use output::{emit, read_json, Format};
pub use run::{run, Aggregate, ResultRecord, TrialRecord};
