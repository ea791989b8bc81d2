//! Command-line front end: datasets on disk, metrics, equivariance audits.

pub mod audit;
pub mod commands;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod runner;

pub use error::{CliError, Result};
