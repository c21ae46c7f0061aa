//! Experiment runner for the `meanq` crate: TOML configs, seeded parallel
//! runs, per-seed and cross-run CSVs, and summary tables.

pub mod config;
pub mod runner;
pub mod summary;

pub use config::{parse_config, ConfigError, ExperimentConfig, Precision, Variant};
pub use runner::{run_experiment, run_seed, ExperimentOutcome, RunManifest, RunOptions};
pub use summary::{summarize, SummaryRow};
