//! Experiment orchestration: configs, sweeps, reports and acceptance checks.

pub mod acceptance;
pub mod config;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{mitigation_study, report, run_experiment, MitigationReport, RunManifest, RunOptions, RunSummary};
