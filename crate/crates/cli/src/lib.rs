//! Experiment runner for federated histogram boosting: configuration,
//! dataset preparation, federated and centralized runs, sweeps, and
//! plot-data emission.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod summary;

pub use config::{ConfigLayer, ExperimentConfig, Partition, SweepGrid};
pub use error::{CliError, EXIT_CONFIG, EXIT_RUNTIME};
pub use summary::RunSummary;
