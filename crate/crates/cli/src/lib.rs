//! Configuration, command dispatch and reporting for the `detline` tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod suite;

pub use error::{CliError, CliResult, Diagnostic, DiagnosticKind};
