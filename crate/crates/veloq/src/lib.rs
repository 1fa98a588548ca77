//! Reproduction harness: run configuration, per-figure runners and their
//! CSV/JSON outputs.

pub mod config;
pub mod report;
pub mod runners;
