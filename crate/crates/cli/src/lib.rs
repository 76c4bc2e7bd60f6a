//! Config-driven front end for the `lmagg` library: parse an experiment,
//! run one task, persist its artifacts with a hashed manifest.

pub mod config;
pub mod run;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig, Preset, Task};
pub use run::{run, Outcome, RunError};
