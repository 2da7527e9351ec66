//! Command-line driver: scenario files, runners, manifests and sweeps.

// `!(a < b)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod sweep;

pub use commands::{run, RunOutput};
pub use config::{parse_config, Command, Scenario, Value};
pub use error::CliError;
