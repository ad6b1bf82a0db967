//! Front end of the curvforge laboratory: configuration, subcommands,
//! run manifests and plot data.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod plot;

pub use commands::{run, Command, Options, Outcome, Status};
pub use config::{ConfigError, Overrides, RunConfig};
pub use manifest::RunManifest;
