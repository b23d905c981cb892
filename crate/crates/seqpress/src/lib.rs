//! File formats, checkpoints, configuration, reports and the command-line
//! front end for the `seqpress-core` models.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod formats;
pub mod report;

pub use error::{AppError, Result};
