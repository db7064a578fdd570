//! Configuration, experiment orchestration and file formats for
//! `boussinesq-core`, plus the `boussinesq-lab` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod output;
pub mod scenario;

pub use commands::{run_command, Command, Outcome, RunOptions};
pub use config::{load_config, parse_config, ExperimentConfig, Violation};
pub use error::LabError;
pub use scenario::Scenario;
