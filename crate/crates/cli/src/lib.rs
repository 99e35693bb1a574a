//! Command-line front end of the walking toolkit: configuration, export,
//! plots and animation frames.

pub mod animate;
pub mod commands;
pub mod config;
pub mod error;
pub mod export;
pub mod plot;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
