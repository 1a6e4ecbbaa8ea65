//! End-to-end experiment pipeline: ingest a dataset, produce base
//! recommendations, re-rank them per network metric and sort order, and
//! evaluate the re-ranked lists.

pub mod artifacts;
pub mod config;
pub mod pipeline;

pub use config::{resolve_config, validate_config, ConfigError, RawConfig, Requirements, RunConfig};
pub use pipeline::{execute, run_pipeline, Stage};
