//! Pipeline orchestration for the `clockflow` binary: configuration,
//! artifact files, and the subcommand implementations.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod corpus;
