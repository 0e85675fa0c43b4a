//! Experiment harness: corpus handling, config, grid runner and plot output.

pub mod config;
pub mod corpus;
pub mod plot;
pub mod run;
pub mod synth;

pub use config::{ExperimentConfig, Overrides, Receiver};
pub use run::{run_experiment, sentence_seed, Assets, CellKey, CellResult, ResultSet, RunSummary};
