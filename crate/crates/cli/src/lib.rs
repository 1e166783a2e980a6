//! Experiment harness for the `noisy-arq` command-line tool: spec parsing,
//! grid sweeps, region searches and CSV/JSON output.

pub mod cell;
pub mod output;
pub mod regions;
pub mod run;
pub mod spec;
pub mod verify;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("spec: {0}")]
    Spec(#[from] spec::SpecError),
    #[error("{0}: {1}")]
    Io(PathBuf, String),
    #[error("cell {cell}: {message}")]
    Cell { cell: String, message: String },
}
