//! `α` against student accuracy over fixed teacher subsets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::{summarize, Summary};
use super::pipeline::{distill, for_each_seed, prepare_seed, train};
use crate::error::{Error, Result};
use crate::io::write_json;
use crate::relabel::{contraction_alpha, soft_label, Teacher, MAX_POOL};
use crate::student::evaluate;

/// Subset member naming the all-zero-logit teacher.
pub const UNIFORM_TEACHER: &str = "uniform";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub subset: Vec<String>,
    pub alpha: Summary,
    pub accuracy: Summary,
    /// Per seed, in config seed order.
    pub alphas: Vec<f64>,
    pub accuracies: Vec<f64>,
}

impl SweepRow {
    pub fn name(&self) -> String {
        self.subset.join("+")
    }
}

fn resolve(subset: &[String], pool: &[Teacher], dim: usize, classes: usize) -> Result<Vec<Teacher>> {
    subset
        .iter()
        .map(|id| {
            if id == UNIFORM_TEACHER {
                return Teacher::uniform(UNIFORM_TEACHER, dim, classes);
            }
            pool.iter()
                .find(|t| &t.id == id)
                .cloned()
                .ok_or_else(|| Error::Config(format!("subset member `{id}` is not in teachers.pool")))
        })
        .collect()
}

/// Trains a student per subset and seed with the subset's soft labels on a
/// shared distilled set, and returns rows sorted by ascending mean `α`.
pub fn sweep_alpha(config: &ExperimentConfig, subsets: &[Vec<String>]) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if subsets.is_empty() || subsets.len() > MAX_POOL {
        return Err(Error::Config(format!("alpha sweep needs 1 to {MAX_POOL} subsets, got {}", subsets.len())));
    }
    if subsets.iter().any(Vec::is_empty) {
        return Err(Error::Config("alpha sweep subsets must be nonempty".into()));
    }
    let known: Vec<String> = config.pool.iter().map(|t| t.id()).collect();
    for id in subsets.iter().flatten() {
        if id != UNIFORM_TEACHER && !known.contains(id) {
            return Err(Error::Config(format!("subset member `{id}` is not in teachers.pool")));
        }
    }
    let spec = config.gmm_spec()?;
    let per_seed: Vec<Vec<(f64, f64)>> = for_each_seed(config, |seed| {
        let ctx = prepare_seed(config, &spec, seed)?;
        let set = distill(config, &spec, &ctx.train, seed, config.flags.otg)?;
        subsets
            .iter()
            .map(|subset| {
                let teachers = resolve(subset, &ctx.teachers, spec.dim, spec.num_classes)?;
                let (soft, alpha) = (|| {
                    let soft = soft_label(set.data.points.view(), &teachers)?;
                    let alpha = contraction_alpha(&ctx.train, &set.data, &soft, config.alpha, config.hard_reference)?;
                    Ok::<_, Error>((soft, alpha))
                })()
                .map_err(|e| e.in_stage("relabel"))?;
                let run = train(config, &set.data, &soft, config.flags.otm, seed)?;
                let acc = evaluate(&run.student.model, &ctx.test).map_err(|e| e.in_stage("eval"))?;
                Ok((alpha.alpha, acc))
            })
            .collect()
    })?;
    let mut rows: Vec<SweepRow> = subsets
        .iter()
        .enumerate()
        .map(|(k, subset)| {
            let alphas: Vec<f64> = per_seed.iter().map(|s| s[k].0).collect();
            let accuracies: Vec<f64> = per_seed.iter().map(|s| s[k].1).collect();
            SweepRow {
                subset: subset.clone(),
                alpha: summarize(&alphas),
                accuracy: summarize(&accuracies),
                alphas,
                accuracies,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.alpha.mean.total_cmp(&b.alpha.mean));
    Ok(rows)
}

/// Writes `sweep.csv` and `sweep.json` into `dir`.
pub fn write_sweep(dir: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut text = String::from("subset,alpha_mean,alpha_std,accuracy_mean,accuracy_std,seeds\n");
    let std = |s: &Summary| s.std.map_or_else(String::new, |v| v.to_string());
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name(),
            r.alpha.mean,
            std(&r.alpha),
            r.accuracy.mean,
            std(&r.accuracy),
            r.accuracy.n
        ));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    std::fs::write(dir.join("sweep.csv"), text).map_err(|e| Error::io(dir.join("sweep.csv"), e))?;
    write_json(&dir.join("sweep.json"), rows)
}
