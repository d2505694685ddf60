//! Trials, batch statistics, environment configs, policy comparison, and
//! file formats.

pub mod compare;
pub mod config;
pub mod export;
pub mod stats;
pub mod store;
pub mod trial;

pub use compare::{compare_policies, ComparisonReport, PolicyRow};
pub use config::{ConfigError, EnvironmentConfig};
pub use stats::{run_batch, Estimate, TrialStats};
pub use trial::{run_trial, Controller, TableController, TrialRecord, TrialSetup};
