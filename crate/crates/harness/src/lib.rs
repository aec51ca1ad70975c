//! Command-line harness: configuration, experiment drivers and artifacts.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::Outcome;
pub use config::{RawConfig, RunConfig};
pub use error::{HarnessError, EXIT_OK, EXIT_USAGE, EXIT_VERIFICATION};
