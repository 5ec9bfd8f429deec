//! Command-line error taxonomy; the exit code tells scripts whether the
//! problem is their configuration or a runtime failure.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "missing artifact {path}: run `seiznet {produced_by}` before `seiznet {needed_for}`"
    )]
    MissingArtifact { path: PathBuf, produced_by: &'static str, needed_for: &'static str },
    #[error("{0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for anything the user can fix in config or stage order, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingArtifact { .. } => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io error: {e}"))
    }
}

impl From<seiznet_core::signal::SignalError> for CliError {
    fn from(e: seiznet_core::signal::SignalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<seiznet_core::nn::NnError> for CliError {
    fn from(e: seiznet_core::nn::NnError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<seiznet_core::predictor::PredictorError> for CliError {
    fn from(e: seiznet_core::predictor::PredictorError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<seiznet_core::netsim::NetsimError> for CliError {
    fn from(e: seiznet_core::netsim::NetsimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<seiznet_core::metrics::MetricsError> for CliError {
    fn from(e: seiznet_core::metrics::MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}
