//! Training, evaluation, baselines and ablations for EGNO on charged
//! N-body data, plus the `EGNOCKPT` checkpoint format and CSV reports.

pub mod checkpoint;
pub mod config;
mod error;
pub mod eval;
pub mod report;
pub mod train;
pub mod variant;

pub use error::{HarnessError, Result};
