//! Configuration, stage commands and the experiment matrix for dmguide.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{stage_seed, RunConfig};
pub use error::{CliError, CliResult};
