//! Benchmark harness for the scale-mixture EM optimizer: experiment
//! configuration, the experiment runners, and CSV output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{validate_config, ExperimentConfig, ExperimentName};
pub use experiments::{run_experiment, BenchError};
