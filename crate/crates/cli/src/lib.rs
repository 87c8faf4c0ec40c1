//! Command-line front end: measure specs, file formats and subcommands.

pub mod commands;
pub mod io;
pub mod spec;
