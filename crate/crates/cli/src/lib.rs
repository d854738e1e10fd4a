//! Scenario files, run artifacts, and the `srcbf` command-line interface.

pub mod commands;
pub mod config;
pub mod output;
