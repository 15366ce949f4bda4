//! Configuration, presets, and output formats of the `contagion` runner.

pub mod commands;
pub mod config;
pub mod output;
