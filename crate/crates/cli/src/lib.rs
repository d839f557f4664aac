//! Library side of the `sfq` command-line tool: configuration files,
//! subcommand implementations and exit-code mapping. `main.rs` only parses
//! arguments and prints.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
