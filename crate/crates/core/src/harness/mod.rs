//! Experiment harness: run configuration, campaigns, and JSON/CSV reports.

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ConfigError, RunConfig, VariantKey};
pub use experiments::*;
pub use report::{Meta, Report, ReportError, SCHEMA_VERSION};
