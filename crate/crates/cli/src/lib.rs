//! Experiment runner: manifests, synthetic data, cached preprocessing and
//! features, scoring, fusion and the results table.

pub mod app;
pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use error::{CliError, Result};
