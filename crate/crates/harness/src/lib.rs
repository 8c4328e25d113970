//! Experiment runner for `fea-core`: JSON configs in, CSV traces and a JSON
//! report out.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::{validate_config, ConfigError, ExperimentConfig, ExperimentKind, Setup};
pub use error::RunError;
pub use experiments::{run_seed, SeedRun, Trace};
pub use report::{run_experiment, RunReport, SeedReport};
