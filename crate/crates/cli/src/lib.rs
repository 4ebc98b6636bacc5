//! Library behind the `dielq` command: run configs, the staged pipeline,
//! report writers and the synthetic dataset generator.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod numfmt;
pub mod pipeline;
pub mod report;

pub use commands::{run, Cli};
pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::Report;
