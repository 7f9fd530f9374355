//! Command-line front end for `cdfit`: TOML run configurations, the `fit`,
//! `sweep`, `verify` and `simulate` subcommands, and their CSV output.

pub mod commands;
pub mod config;
pub mod error;
pub mod loader;
pub mod output;
pub mod suite;

pub use commands::{cmd_fit, cmd_simulate, cmd_sweep, cmd_verify, load_config, Overrides};
pub use config::RunConfig;
pub use error::{CliError, Result};
