//! Experiment driver: JSON configs, seeded parallel runs, regret against
//! the oracle, CSV output and presets for the three standard experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod fit;
pub mod output;
pub mod presets;
pub mod runner;

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{0}")]
    Core(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}
