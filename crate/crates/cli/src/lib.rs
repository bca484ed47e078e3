//! Experiment harness for the `emarl` learners: configuration files, seed
//! replicas, metrics CSVs, SVG plots, sweeps, target comparisons and the
//! memory benchmark.

pub mod bench;
pub mod config;
pub mod metrics;
pub mod plot;
pub mod run;
pub mod summary;

pub use config::ExperimentConfig;
