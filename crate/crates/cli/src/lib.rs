//! File formats, experiment configuration and the comparison runner behind
//! the `eldam` command-line tool.

pub mod config;
pub mod csv_io;
pub mod error;
pub mod experiment;
pub mod model_io;

pub use config::{DataSource, ExperimentConfig, LossConfig, ModelConfig, TrainSettings};
pub use error::{Error, Result};
pub use experiment::{compare, run_cell, CellResult, ComparisonSummary};
