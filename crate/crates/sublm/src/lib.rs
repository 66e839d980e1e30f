//! File formats, reports and the `sublm` command-line front end.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod reports;
pub mod tune;
pub mod vocab_io;

pub use error::{CliError, CliResult};
