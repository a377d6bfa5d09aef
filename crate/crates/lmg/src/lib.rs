//! Command-line front end for `lmg-core`: TOML run configuration, the
//! subcommands and self-describing CSV output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{run, Subcommand};
pub use config::{parse_config, parse_with_overrides, RunConfig};
pub use error::CliError;
