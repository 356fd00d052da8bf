//! Config-driven experiment runner and the verification suite for `lelong-core`.

pub mod acceptance;
pub mod catalog;
pub mod config;
pub mod run;

pub use config::{parse, ExperimentConfig, Plan, SchemaError};
pub use run::{execute, RunError, RunOutput};
