//! Command-line front end: file formats for datasets, models and reports,
//! and the subcommands that drive simulation, fitting, evaluation and
//! replicated studies.

pub mod cli;
pub mod commands;
pub mod error;
pub mod files;

pub use cli::Cli;
pub use commands::run;
pub use error::{CliError, Result};
