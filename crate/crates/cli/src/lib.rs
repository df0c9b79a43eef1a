//! Input, output and configuration for the `seeqr` command-line tool.

pub mod config;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};
