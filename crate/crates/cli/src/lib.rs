//! Library surface of the `seiznet` binary, exposed so integration tests can
//! drive the pipeline stages directly.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_evaluate, cmd_generate, cmd_report, cmd_simulate, cmd_train, Artifacts};
pub use config::PipelineConfig;
pub use error::{CliError, Result};
