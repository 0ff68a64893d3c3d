//! File formats, JSON reports and the `ordcost` command-line tool built on
//! [`ordcost_core`].

pub mod args;
pub mod commands;
pub mod error;
pub mod io;
pub mod report;

pub use commands::{execute, Execution};
pub use error::{CliError, Result};
