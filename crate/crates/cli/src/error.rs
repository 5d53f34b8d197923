use std::path::PathBuf;

use histfed_core::binning::BinningError;
use histfed_core::data::DataError;
use histfed_core::federation::FederationError;
use histfed_core::metrics::MetricError;
use histfed_core::model_io::ModelIoError;
use histfed_core::trainer::TrainError;
use thiserror::Error;

/// Exit code for invalid configuration or arguments.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for failures while running an experiment.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Binning(#[from] BinningError),
    #[error(transparent)]
    Federation(#[from] FederationError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{context}: {source}")]
    Context { context: String, source: Box<CliError> },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        CliError::Context { context: context.into(), source: Box::new(self) }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Context { source, .. } => source.exit_code(),
            _ => EXIT_RUNTIME,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
