//! Run reports and their CSV and JSON forms.
//!
//! `report.csv` holds one row per seed and arm and is a pure function of the
//! config. Stage wall-clock times go to `timings.csv` so the report stays
//! byte-identical across repeated runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{AblationFlags, ExperimentConfig};
use super::metrics::{sign_test, summarize, SignTest, Summary};
use super::pipeline::SeedRecord;
use crate::error::{Error, Result};
use crate::io::write_json;

/// Aggregate over seeds for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub arm: String,
    pub flags: AblationFlags,
    pub ipc: usize,
    /// Absolute coverage thresholds, one per coverage column.
    pub thresholds: Vec<f64>,
    pub accuracy: Summary,
    pub alpha: Summary,
    pub w_distill: Summary,
    pub coverage: Vec<Summary>,
    pub records: Vec<SeedRecord>,
}

impl RunReport {
    pub fn new(config: &ExperimentConfig, flags: AblationFlags, records: Vec<SeedRecord>) -> Self {
        let column = |f: &dyn Fn(&SeedRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
        let thresholds = config.thresholds();
        let coverage = (0..thresholds.len())
            .map(|k| summarize(&column(&|r| r.coverage[k])))
            .collect();
        Self {
            run_id: config.run_id.clone(),
            arm: flags.arm_name(),
            flags,
            ipc: config.ipc,
            accuracy: summarize(&column(&|r| r.accuracy)),
            alpha: summarize(&column(&|r| r.alpha)),
            w_distill: summarize(&column(&|r| r.w_distill_mean)),
            coverage,
            thresholds,
            records,
        }
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.accuracy).collect()
    }
}

/// Full arm against one ablated arm over paired seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ablated: String,
    pub full_mean: f64,
    pub ablated_mean: f64,
    /// One-sided test of full > ablated.
    pub sign_test: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub run_id: String,
    pub arms: Vec<RunReport>,
    pub comparisons: Vec<Comparison>,
}

impl AblationReport {
    /// `arms[0]` must be the full arm.
    pub fn new(config: &ExperimentConfig, arms: Vec<RunReport>) -> Result<Self> {
        let full = arms.first().ok_or_else(|| Error::InvalidInput("ablation without arms".into()))?;
        let full_acc = full.accuracies();
        let comparisons = arms[1..]
            .iter()
            .map(|arm| {
                Ok(Comparison {
                    ablated: arm.arm.clone(),
                    full_mean: full.accuracy.mean,
                    ablated_mean: arm.accuracy.mean,
                    sign_test: sign_test(&full_acc, &arm.accuracies())?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            run_id: config.run_id.clone(),
            arms,
            comparisons,
        })
    }

    pub fn arm(&self, name: &str) -> Option<&RunReport> {
        self.arms.iter().find(|a| a.arm == name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    let mut line = |fields: &[String]| writeln!(w, "{}", fields.join(",")).map_err(|e| Error::io(path, e));
    line(header)?;
    for row in rows {
        line(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Report CSV header for the given absolute thresholds.
pub fn report_header(thresholds: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["run_id", "seed", "otg", "lia", "otm", "ipc", "alpha", "accuracy", "w_distill_mean"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(thresholds.iter().map(|t| format!("coverage@{t}")));
    h
}

fn flag_fields(r: &SeedRecord) -> [String; 3] {
    [r.flags.otg.to_string(), r.flags.lia.to_string(), r.flags.otm.to_string()]
}

/// Writes one row per record, in the order given.
pub fn write_report_csv<'a>(path: &Path, thresholds: &[f64], records: impl IntoIterator<Item = &'a SeedRecord>) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .into_iter()
        .map(|r| {
            let mut row = vec![r.run_id.clone(), r.seed.to_string()];
            row.extend(flag_fields(r));
            row.extend([
                r.ipc.to_string(),
                r.alpha.to_string(),
                r.accuracy.to_string(),
                r.w_distill_mean.to_string(),
            ]);
            row.extend(r.coverage.iter().map(f64::to_string));
            row
        })
        .collect();
    write_rows(path, &report_header(thresholds), &rows)
}

pub fn write_timings_csv<'a>(path: &Path, records: impl IntoIterator<Item = &'a SeedRecord>) -> Result<()> {
    let header: Vec<String> = [
        "run_id", "seed", "otg", "lia", "otm", "data_s", "teachers_s", "distill_s", "relabel_s", "train_s", "eval_s",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = records
        .into_iter()
        .map(|r| {
            let t = r.timings;
            let mut row = vec![r.run_id.clone(), r.seed.to_string()];
            row.extend(flag_fields(r));
            row.extend([t.data, t.teachers, t.distill, t.relabel, t.train, t.eval].iter().map(|s| format!("{s:.6}")));
            row
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// Writes `report.csv`, `report.json`, `timings.csv` and the resolved
/// `config.txt` into the output directory.
pub fn write_run_report(config: &ExperimentConfig, report: &RunReport) -> Result<()> {
    let dir = &config.output_dir;
    write_report_csv(&dir.join("report.csv"), &report.thresholds, &report.records)?;
    write_timings_csv(&dir.join("timings.csv"), &report.records)?;
    write_json(&dir.join("report.json"), report)?;
    std::fs::write(dir.join("config.txt"), config.to_text()).map_err(|e| Error::io(dir.join("config.txt"), e))
}

/// Like [`write_run_report`] with rows ordered by seed, then arm.
pub fn write_ablation_report(config: &ExperimentConfig, report: &AblationReport) -> Result<()> {
    let dir = &config.output_dir;
    let thresholds = config.thresholds();
    let seeds = report.arms.first().map_or(0, |a| a.records.len());
    let rows: Vec<&SeedRecord> = (0..seeds)
        .flat_map(|s| report.arms.iter().map(move |a| &a.records[s]))
        .collect();
    write_report_csv(&dir.join("report.csv"), &thresholds, rows.iter().copied())?;
    write_timings_csv(&dir.join("timings.csv"), rows.iter().copied())?;
    write_json(&dir.join("report.json"), report)?;
    std::fs::write(dir.join("config.txt"), config.to_text()).map_err(|e| Error::io(dir.join("config.txt"), e))
}
