//! Command-line harness for one-bit signal recovery: data generation,
//! network training, single-instance recovery, and the seeded benchmark
//! experiments with CSV reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod instfile;
pub mod netfile;

pub use error::{CliError, Result};
