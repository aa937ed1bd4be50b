//! Command-line front end for the `lpgrad` estimator library.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod output;

pub use error::CliError;
