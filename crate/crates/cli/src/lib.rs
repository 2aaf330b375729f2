//! Command-line front end for `qdev-core`: file formats, reports and the
//! `qdev` subcommands.

pub mod commands;
pub mod error;
pub mod io;
pub mod report;

pub use commands::{run, Streams};
pub use error::{CliError, Result};
pub use report::AnalysisReport;
