//! Experiment harness behind the `mitet` binary.

pub mod charts;
pub mod commands;
pub mod runlog;
pub mod suite;
pub mod svg;

pub use commands::UsageError;
