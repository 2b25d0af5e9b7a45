//! Experiment driver for spatial-spectral unmixing: synthetic scene
//! generation, method runs and evaluation, all through plain files.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use commands::{cmd_eval, cmd_generate, cmd_run, RunManifest, Seeds};
pub use config::RunConfig;
pub use error::{CliError, CliResult, ExitKind};
