//! Command-line front end: scenario files in, reports and tables out.
//!
//! Everything except argument parsing lives here so integration tests can
//! drive scenario handling and the subcommands directly.

pub mod commands;
pub mod failure;
pub mod output;
pub mod scenario;
