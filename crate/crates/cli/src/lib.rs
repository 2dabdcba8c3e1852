//! Library half of the `entrydyn` executable: configuration, CSV files
//! and the subcommands.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;

pub use error::{CliError, CliResult};
