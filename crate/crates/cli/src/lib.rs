//! Command-line front end for the decomposition engine.

pub mod bench;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;
pub mod validate;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
