//! Experiment driver for the multipatch dG tearing-and-interconnecting solver.
//!
//! Each subcommand reads a [`config::RunConfig`], runs the solver on one or more
//! refinement levels and produces a [`output::Table`] plus a JSON report.

// `!(x > 0.0)` is used on purpose so that NaN is rejected as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod manufactured;
pub mod output;

pub use commands::{run, Command, Overrides, RunOutput};
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Solver(#[from] dgieti::Error),
}
