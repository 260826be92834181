//! Experiment configuration.
//!
//! The text form is one `section.key = value` pair per line; `#` starts a
//! comment. Overrides use the same `section.key=value` syntax and are applied
//! after the file, in order. Unknown keys and unparsable values are config
//! errors.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{GmmSpec, GridSpec};
use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::relabel::{AlphaSettings, HardReference, TeacherTraining, MAX_POOL};
use crate::sampler::{EntropyWeight, GuidanceWeights, NoiseSchedule, SamplerConfig};
use crate::student::{LossWeights, MseOperand, StudentSettings};

/// Which of the three contributions are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub otg: bool,
    pub lia: bool,
    pub otm: bool,
}

impl AblationFlags {
    pub const FULL: Self = Self {
        otg: true,
        lia: true,
        otm: true,
    };

    /// Short arm name: `full`, `no-otg`, `no-lia`, `no-otm`, or a
    /// `+`-joined list of the flags that are on.
    pub fn arm_name(self) -> String {
        match (self.otg, self.lia, self.otm) {
            (true, true, true) => "full".into(),
            (false, true, true) => "no-otg".into(),
            (true, false, true) => "no-lia".into(),
            (true, true, false) => "no-otm".into(),
            _ => {
                let on: Vec<&str> = [("otg", self.otg), ("lia", self.lia), ("otm", self.otm)]
                    .into_iter()
                    .filter_map(|(n, f)| f.then_some(n))
                    .collect();
                if on.is_empty() {
                    "none".into()
                } else {
                    on.join("+")
                }
            }
        }
    }
}

/// One pool member: a model kind trained with the seed of a letter, e.g.
/// `mlp16-a`. Members sharing a letter share their training seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherSpec {
    pub kind: ModelKind,
    pub letter: char,
}

impl TeacherSpec {
    pub fn id(&self) -> String {
        format!("{}-{}", self.kind, self.letter)
    }

    /// Index of the letter, used to derive the training seed.
    pub fn seed_index(&self) -> u64 {
        (self.letter as u64).wrapping_sub('a' as u64)
    }
}

impl FromStr for TeacherSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("teacher `{s}` must look like `linear-a` or `mlp16-b`"));
        let (kind, letter) = s.trim().rsplit_once('-').ok_or_else(bad)?;
        let mut chars = letter.chars();
        let letter = match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_lowercase() => c,
            _ => return Err(bad()),
        };
        Ok(Self {
            kind: kind.parse()?,
            letter,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Worker threads for per-seed tasks.
    pub threads: usize,
    /// Whether per-seed datasets, labels and models are written to disk.
    pub write_artifacts: bool,
    pub grid: GridSpec,
    pub grid_seed: u64,
    pub ipc: usize,
    pub guidance: GuidanceWeights,
    pub sampler: SamplerConfig,
    pub pool: Vec<TeacherSpec>,
    pub teacher_training: TeacherTraining,
    pub alpha: AlphaSettings,
    pub hard_reference: HardReference,
    pub student: StudentSettings,
    pub loss: LossWeights,
    pub flags: AblationFlags,
    /// Coverage thresholds as multiples of the mode standard deviation.
    pub coverage_thresholds: Vec<f64>,
    pub coverage_p: f64,
    /// Entropy weight of the reported per-class Sinkhorn distances, relative
    /// to the mean cost.
    pub w_distill_lambda: f64,
    pub w_distill_iters: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seeds: (0..20).collect(),
            output_dir: PathBuf::from("out"),
            threads: 1,
            write_artifacts: true,
            grid: GridSpec::default(),
            grid_seed: 0,
            ipc: 10,
            guidance: GuidanceWeights::default(),
            sampler: SamplerConfig::default(),
            pool: ["linear-a", "linear-b", "mlp8-a", "mlp16-a"]
                .iter()
                .map(|s| s.parse().expect("default pool parses"))
                .collect(),
            teacher_training: TeacherTraining::default(),
            alpha: AlphaSettings::default(),
            hard_reference: HardReference::GenerationLabels,
            student: StudentSettings::default(),
            loss: LossWeights::default(),
            flags: AblationFlags::FULL,
            coverage_thresholds: vec![0.5, 1.0, 2.0, 4.0],
            coverage_p: 2.0,
            w_distill_lambda: 0.1,
            w_distill_iters: 100,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected a boolean, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// `a..b` (half open) or a comma-separated list.
fn parse_seeds(key: &str, value: &str) -> Result<Vec<u64>> {
    match value.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi): (u64, u64) = (parse(key, lo)?, parse(key, hi)?);
            Ok((lo..hi).collect())
        }
        None => parse_list(key, value),
    }
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.trim() == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn fmt_list<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_optional<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".into(), |v| v.to_string())
}

fn reference_name(r: HardReference) -> &'static str {
    match r {
        HardReference::ArgmaxProjection => "argmax",
        HardReference::GenerationLabels => "generation",
    }
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies one `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` must be `section.key=value`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "run.id" => self.run_id = v.to_string(),
            "run.seeds" => self.seeds = parse_seeds(key, v)?,
            "run.output_dir" => self.output_dir = PathBuf::from(v),
            "run.threads" => self.threads = parse(key, v)?,
            "run.artifacts" => self.write_artifacts = parse_bool(key, v)?,

            "data.grid_seed" => self.grid_seed = parse(key, v)?,
            "data.num_classes" => self.grid.num_classes = parse(key, v)?,
            "data.modes_per_class" => self.grid.modes_per_class = parse(key, v)?,
            "data.dim" => self.grid.dim = parse(key, v)?,
            "data.mode_std" => self.grid.mode_std = parse(key, v)?,
            "data.samples_per_class" => self.grid.samples_per_class = parse(key, v)?,
            "data.spacing" => self.grid.spacing = parse(key, v)?,
            "data.levels" => self.grid.levels = parse(key, v)?,
            "data.mode_weights" => self.grid.mode_weights = parse_list(key, v)?,

            "sampler.ipc" => self.ipc = parse(key, v)?,
            "sampler.beta1" => self.guidance.beta1 = parse(key, v)?,
            "sampler.gamma" => self.guidance.gamma = parse(key, v)?,
            "sampler.rho" => self.guidance.rho = parse(key, v)?,
            "sampler.lambda1" => {
                self.guidance.lambda1 = match self.guidance.lambda1 {
                    EntropyWeight::RelativeToMeanCost(_) => EntropyWeight::RelativeToMeanCost(parse(key, v)?),
                    EntropyWeight::Absolute(_) => EntropyWeight::Absolute(parse(key, v)?),
                }
            }
            "sampler.lambda1_mode" => {
                let value = match self.guidance.lambda1 {
                    EntropyWeight::RelativeToMeanCost(x) | EntropyWeight::Absolute(x) => x,
                };
                self.guidance.lambda1 = match v {
                    "relative" => EntropyWeight::RelativeToMeanCost(value),
                    "absolute" => EntropyWeight::Absolute(value),
                    _ => return Err(Error::Config(format!("`{key}`: expected relative or absolute, got `{v}`"))),
                }
            }
            "sampler.steps" => {
                self.sampler.schedule =
                    NoiseSchedule::ddim(parse(key, v)?).map_err(|e| Error::Config(format!("`{key}`: {e}")))?
            }
            "sampler.batch_size" => self.sampler.batch_size = parse(key, v)?,
            "sampler.sinkhorn_iters" => self.sampler.sinkhorn_iters = parse(key, v)?,
            "sampler.p" => self.sampler.p = parse(key, v)?,
            "sampler.divergence_factor" => self.sampler.divergence_factor = parse_optional(key, v)?,

            "teachers.pool" => self.pool = parse_list(key, v)?,
            "teachers.epochs" => self.teacher_training.epochs = parse(key, v)?,
            "teachers.lr" => self.teacher_training.lr = parse(key, v)?,
            "teachers.batch_size" => self.teacher_training.batch_size = parse(key, v)?,

            "relabel.epsilon_factor" => self.alpha.epsilon_factor = parse(key, v)?,
            "relabel.iterations" => self.alpha.iterations = parse(key, v)?,
            "relabel.delta" => self.alpha.delta = parse(key, v)?,
            "relabel.p" => self.alpha.p = parse(key, v)?,
            "relabel.hard_reference" => {
                self.hard_reference = match v {
                    "argmax" => HardReference::ArgmaxProjection,
                    "generation" => HardReference::GenerationLabels,
                    _ => return Err(Error::Config(format!("`{key}`: expected argmax or generation, got `{v}`"))),
                }
            }

            "student.model" => self.student.kind = v.parse()?,
            "student.epochs" => self.student.epochs = parse(key, v)?,
            "student.batch_size" => self.student.batch_size = parse(key, v)?,
            "student.lr" => self.student.lr = parse(key, v)?,
            "student.weight_decay" => self.student.weight_decay = parse(key, v)?,
            "student.warmup_frac" => self.student.warmup_frac = parse(key, v)?,
            "student.ema" => self.student.ema = parse_optional(key, v)?,
            "student.kappa1" => self.loss.kappa1 = parse(key, v)?,
            "student.kappa2" => self.loss.kappa2 = parse(key, v)?,
            "student.beta2" => self.loss.beta2 = parse(key, v)?,
            "student.lambda2" => self.loss.lambda2 = parse(key, v)?,
            "student.sinkhorn_iters" => self.loss.sinkhorn_iters = parse(key, v)?,
            "student.p" => self.loss.p = parse(key, v)?,
            "student.mse_operand" => {
                self.loss.mse_operand = match v {
                    "probabilities" => MseOperand::Probabilities,
                    "logits" => MseOperand::Logits,
                    _ => return Err(Error::Config(format!("`{key}`: expected probabilities or logits, got `{v}`"))),
                }
            }

            "ablation.otg" => self.flags.otg = parse_bool(key, v)?,
            "ablation.lia" => self.flags.lia = parse_bool(key, v)?,
            "ablation.otm" => self.flags.otm = parse_bool(key, v)?,

            "coverage.thresholds" => self.coverage_thresholds = parse_list(key, v)?,
            "coverage.p" => self.coverage_p = parse(key, v)?,
            "metrics.w_lambda" => self.w_distill_lambda = parse(key, v)?,
            "metrics.w_iters" => self.w_distill_iters = parse(key, v)?,

            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Renders the config so that [`Self::from_text`] reads it back equal.
    pub fn to_text(&self) -> String {
        let (lambda_mode, lambda) = match self.guidance.lambda1 {
            EntropyWeight::RelativeToMeanCost(x) => ("relative", x),
            EntropyWeight::Absolute(x) => ("absolute", x),
        };
        let mse = match self.loss.mse_operand {
            MseOperand::Probabilities => "probabilities",
            MseOperand::Logits => "logits",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("run.id", self.run_id.clone()),
            ("run.seeds", fmt_list(&self.seeds)),
            ("run.output_dir", self.output_dir.display().to_string()),
            ("run.threads", self.threads.to_string()),
            ("run.artifacts", self.write_artifacts.to_string()),
            ("data.grid_seed", self.grid_seed.to_string()),
            ("data.num_classes", self.grid.num_classes.to_string()),
            ("data.modes_per_class", self.grid.modes_per_class.to_string()),
            ("data.dim", self.grid.dim.to_string()),
            ("data.mode_std", self.grid.mode_std.to_string()),
            ("data.samples_per_class", self.grid.samples_per_class.to_string()),
            ("data.spacing", self.grid.spacing.to_string()),
            ("data.levels", self.grid.levels.to_string()),
            ("data.mode_weights", fmt_list(&self.grid.mode_weights)),
            ("sampler.ipc", self.ipc.to_string()),
            ("sampler.beta1", self.guidance.beta1.to_string()),
            ("sampler.gamma", self.guidance.gamma.to_string()),
            ("sampler.rho", self.guidance.rho.to_string()),
            ("sampler.lambda1_mode", lambda_mode.into()),
            ("sampler.lambda1", lambda.to_string()),
            ("sampler.steps", self.sampler.schedule.steps().to_string()),
            ("sampler.batch_size", self.sampler.batch_size.to_string()),
            ("sampler.sinkhorn_iters", self.sampler.sinkhorn_iters.to_string()),
            ("sampler.p", self.sampler.p.to_string()),
            ("sampler.divergence_factor", fmt_optional(self.sampler.divergence_factor)),
            ("teachers.pool", self.pool.iter().map(TeacherSpec::id).collect::<Vec<_>>().join(",")),
            ("teachers.epochs", self.teacher_training.epochs.to_string()),
            ("teachers.lr", self.teacher_training.lr.to_string()),
            ("teachers.batch_size", self.teacher_training.batch_size.to_string()),
            ("relabel.epsilon_factor", self.alpha.epsilon_factor.to_string()),
            ("relabel.iterations", self.alpha.iterations.to_string()),
            ("relabel.delta", self.alpha.delta.to_string()),
            ("relabel.p", self.alpha.p.to_string()),
            ("relabel.hard_reference", reference_name(self.hard_reference).into()),
            ("student.model", self.student.kind.to_string()),
            ("student.epochs", self.student.epochs.to_string()),
            ("student.batch_size", self.student.batch_size.to_string()),
            ("student.lr", self.student.lr.to_string()),
            ("student.weight_decay", self.student.weight_decay.to_string()),
            ("student.warmup_frac", self.student.warmup_frac.to_string()),
            ("student.ema", fmt_optional(self.student.ema)),
            ("student.kappa1", self.loss.kappa1.to_string()),
            ("student.kappa2", self.loss.kappa2.to_string()),
            ("student.beta2", self.loss.beta2.to_string()),
            ("student.lambda2", self.loss.lambda2.to_string()),
            ("student.sinkhorn_iters", self.loss.sinkhorn_iters.to_string()),
            ("student.p", self.loss.p.to_string()),
            ("student.mse_operand", mse.into()),
            ("ablation.otg", self.flags.otg.to_string()),
            ("ablation.lia", self.flags.lia.to_string()),
            ("ablation.otm", self.flags.otm.to_string()),
            ("coverage.thresholds", fmt_list(&self.coverage_thresholds)),
            ("coverage.p", self.coverage_p.to_string()),
            ("metrics.w_lambda", self.w_distill_lambda.to_string()),
            ("metrics.w_iters", self.w_distill_iters.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").expect("writing to a string");
        }
        out
    }

    /// The dataset spec built from the grid settings.
    pub fn gmm_spec(&self) -> Result<GmmSpec> {
        self.grid.build(self.grid_seed)
    }

    /// Absolute coverage thresholds.
    pub fn thresholds(&self) -> Vec<f64> {
        self.coverage_thresholds.iter().map(|k| k * self.grid.mode_std).collect()
    }

    /// Checks everything that can be checked without running a stage.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.ipc == 0 {
            return fail("sampler.ipc must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("run.seeds is empty".into());
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return fail("run.seeds must be distinct".into());
        }
        if self.threads == 0 {
            return fail("run.threads must be at least 1".into());
        }
        if self.run_id.is_empty() || self.run_id.contains([',', '"', '\n']) {
            return fail(format!("run.id `{}` must be nonempty and free of commas and quotes", self.run_id));
        }
        if self.pool.is_empty() || self.pool.len() > MAX_POOL {
            return fail(format!("teachers.pool needs 1 to {MAX_POOL} members, got {}", self.pool.len()));
        }
        let ids: BTreeSet<String> = self.pool.iter().map(TeacherSpec::id).collect();
        if ids.len() != self.pool.len() {
            return fail("teachers.pool has duplicate members".into());
        }
        if self.teacher_training.batch_size == 0 || !(self.teacher_training.lr > 0.0) {
            return fail("teachers.batch_size and teachers.lr must be positive".into());
        }
        if self.student.batch_size == 0 || self.student.batch_size > self.ipc * self.grid.num_classes {
            return fail(format!(
                "student.batch_size must be in 1..={} for this IPC",
                self.ipc * self.grid.num_classes
            ));
        }
        if !(self.student.lr > 0.0) || !(self.student.weight_decay >= 0.0) || !(0.0..=1.0).contains(&self.student.warmup_frac) {
            return fail("student.lr must be positive, weight_decay >= 0, warmup_frac in [0, 1]".into());
        }
        if self.sampler.batch_size == 0 || !(self.sampler.p >= 1.0) {
            return fail("sampler.batch_size must be positive and sampler.p >= 1".into());
        }
        if !(self.alpha.iterations > 0 && self.alpha.delta >= 0.0 && self.alpha.p >= 1.0) {
            return fail("relabel.iterations must be positive, delta >= 0, p >= 1".into());
        }
        if self.coverage_thresholds.is_empty() || self.coverage_thresholds.iter().any(|t| !(*t >= 0.0)) {
            return fail("coverage.thresholds must be a nonempty list of values >= 0".into());
        }
        if !(self.coverage_p >= 1.0) || !(self.w_distill_lambda > 0.0) || self.w_distill_iters == 0 {
            return fail("coverage.p must be >= 1, metrics.w_lambda and metrics.w_iters positive".into());
        }
        self.guidance.validate()?;
        self.loss.validate()?;
        self.gmm_spec().map(|_| ())
    }
}
