//! Configuration-driven experiments for model-free policy optimization on
//! stochastic LQR: Monte Carlo trials, CSV tables and SVG figures.

pub mod commands;
pub mod config;
pub mod error;
pub mod plot;
pub mod runner;
pub mod table;

pub use config::{Experiment, ExperimentConfig};
pub use error::{CliError, Result};
pub use table::{AggregateRow, ResultRow, Trial};
