//! Experiment runner behind the `popinv` binary.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::CliError;
