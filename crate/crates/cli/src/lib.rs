//! Command-line front end: config loading and the stages behind each
//! subcommand.

pub mod commands;
pub mod config;
pub mod pipeline;
