//! Experiment harness for uncertainty-driven active learning in
//! super-resolution: data generation, training, selection, evaluation and
//! multi-arm sweeps.

pub mod commands;
pub mod config;
pub mod experiment;

pub use commands::{exit_code, run, Cli};
pub use config::{ExperimentConfig, FlatConfig};
pub use experiment::{run_experiment, ExperimentOptions};
