//! IO companion for the `lmc-core` toolkit: dataset and checkpoint file
//! formats, PNG/CSV export, run directories with config digests, and the
//! command implementations behind the `lmc` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod idx;
pub mod nets;
pub mod plots;
pub mod pngio;
pub mod rundir;
pub mod threads;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
