//! Command-line harness for `icr-core`: experiment configuration, the
//! KISS-GP baseline, window-parallel sampling, benchmarks and file formats.

pub mod bench;
pub mod commands;
pub mod config;
pub mod io;
pub mod kiss;
pub mod parallel;

pub use commands::Method;
pub use config::{ConfigError, ExperimentConfig};
