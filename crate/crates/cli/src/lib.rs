//! Command-line front end for `diffpass-core`: grid scans of the passivity
//! conditions, prolonged simulations and figure demos, with CSV, JSON and
//! SVG output.
//!
//! Scans and ensembles run on `DIFFPASS_THREADS` workers (unset or `0`
//! means one per core); results never depend on the worker count.

pub mod cli;
pub mod commands;
pub mod csv;
pub mod error;
pub mod parallel;
pub mod report;
pub mod spec;
pub mod svg;

pub use cli::run;
pub use error::{exit, CliError};
