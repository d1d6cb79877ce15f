//! Experiment driver for reinforcement-learning-assisted QAOA: file formats,
//! a rayon-backed executor, run manifests and the `qaoa-rl` subcommands.
//!
//! The numerics live in [`qaoa_rl_core`]; this crate adds everything that
//! touches the file system or the process.

pub mod cli;
pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod parallel;

pub use error::{CliError, CliResult};
pub use parallel::RayonExecutor;
