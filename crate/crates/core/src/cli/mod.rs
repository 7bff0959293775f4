//! Command-line entry point and run-directory management.

pub mod config;
pub mod pipeline;
pub mod commands;
pub mod manifest;
