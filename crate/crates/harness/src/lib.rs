//! Experiment harness for three-ray semi-blind localization: configuration,
//! Monte-Carlo runners, and report writers behind the `sbl-sim` CLI.

pub mod config;
pub mod experiment;
pub mod report;
pub mod selftest;

pub use config::Config;
pub use experiment::{Estimator, Experiment, ExperimentError};
