//! Experiment runner over `irsec_core`: JSON configs with unit-suffixed keys,
//! sweep specs, beampatterns and CSV/JSON outputs.

pub mod beampattern;
pub mod config;
pub mod error;
pub mod experiment;
pub mod format;

pub use error::{CliError, Result};
