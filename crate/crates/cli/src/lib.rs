//! Command-line workflows for turbine model identification: surrogate data
//! generation, EDMD and NARX fitting, evaluation and RBF-count sweeps.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;

pub use config::{Overrides, RunConfig};
pub use error::CliError;
