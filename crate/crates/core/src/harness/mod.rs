//! Experiment orchestration: configs, the per-seed pipeline, ablations,
//! `α` sweeps, metrics and reports.

pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use config::{AblationFlags, ExperimentConfig, TeacherSpec};
pub use metrics::{coverage, coverage_grid, sign_test, spearman, summarize, SignTest, Summary};
pub use pipeline::{ablation_arms, run_arms, SeedRecord, StageTimings};
pub use report::{AblationReport, Comparison, RunReport};
pub use sweep::{sweep_alpha, SweepRow, UNIFORM_TEACHER};

use crate::error::Result;

/// Runs the arm selected by `config.flags` over all seeds and writes its
/// artifacts and reports under `config.output_dir`.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunReport> {
    let records = run_arms(config, &[config.flags])?.remove(0);
    let report = RunReport::new(config, config.flags, records);
    report::write_run_report(config, &report)?;
    Ok(report)
}

/// Runs the full arm and the three single ablations on shared seeds and
/// writes the combined report.
pub fn run_ablation(config: &ExperimentConfig) -> Result<AblationReport> {
    let arms = ablation_arms();
    let records = run_arms(config, &arms)?;
    let reports = arms
        .iter()
        .zip(records)
        .map(|(&flags, r)| RunReport::new(config, flags, r))
        .collect();
    let report = AblationReport::new(config, reports)?;
    report::write_ablation_report(config, &report)?;
    Ok(report)
}
