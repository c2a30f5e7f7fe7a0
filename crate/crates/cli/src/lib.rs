//! Command implementations behind the `oodil` binary.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod viz;
