//! Experiment harness: plain-text configs, metrics files, plots, seed
//! sweeps and run comparison. The `tsc` binary is a thin CLI over this.

pub mod compare;
pub mod config;
pub mod dataset_io;
mod error;
pub mod experiment;
pub mod metrics;
pub mod plot;

pub use error::{HarnessError, Result};
