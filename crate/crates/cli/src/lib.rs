//! Experiment runner behind the `tnlab` binary: config parsing, the
//! experiment catalogue and report writing.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{Config, Kind};
pub use report::{Check, Outcome, Summary};
