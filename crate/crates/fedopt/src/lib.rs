//! Command-line harness around `fedopt-core`: JSON configs, CSV and JSON
//! file formats, a thread-pool client executor, grid sweeps, bound reports
//! and the invariant checks.

pub mod bounds;
pub mod checkpoint;
pub mod checks;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod oracle;
pub mod run;
pub mod sweep;
pub mod task;

pub use error::{AppError, AppResult};
