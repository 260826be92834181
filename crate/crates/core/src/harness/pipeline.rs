//! Sample, relabel, train and evaluate, per seed and per ablation arm.
//!
//! Arms evaluated on the same seed share everything they can: the dataset
//! and teacher pool always, the distilled set when their `otg` flags agree,
//! and the relabeling when `otg` and `lia` agree. Seeds run as independent
//! tasks on a small worker pool; results are collected in seed order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{AblationFlags, ExperimentConfig};
use super::metrics::coverage_grid;
use crate::data::{make_gmm_dataset, GmmSpec, LabeledDataset};
use crate::error::{Error, Result};
use crate::io::{write_dataset, write_json, write_soft_labels};
use crate::ot::{cost_matrix, sinkhorn_uniform};
use crate::relabel::{
    contraction_alpha, select_teachers, soft_label, train_teacher_recorded, AlphaReport, SoftLabelSet, Teacher,
};
use crate::rng::{Stage, StreamId, StreamUsage};
use crate::sampler::{sample_all_classes, DistilledSet, GuidanceWeights};
use crate::student::{evaluate, train_student, LossWeights, StudentRun};

/// Wall-clock seconds per stage. Shared stages are charged to every arm
/// that used them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub data: f64,
    pub teachers: f64,
    pub distill: f64,
    pub relabel: f64,
    pub train: f64,
    pub eval: f64,
}

/// Everything measured for one seed of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub run_id: String,
    pub seed: u64,
    pub flags: AblationFlags,
    pub ipc: usize,
    pub alpha: f64,
    pub accuracy: f64,
    pub w_distill_mean: f64,
    pub w_distill_per_class: Vec<f64>,
    /// Class-averaged coverage at each absolute threshold.
    pub coverage: Vec<f64>,
    /// `coverage_per_class[c][k]` is class `c` at threshold `k`.
    pub coverage_per_class: Vec<Vec<f64>>,
    pub teachers: Vec<String>,
    pub alpha_report: AlphaReport,
    pub streams: Vec<StreamUsage>,
    #[serde(skip)]
    pub timings: StageTimings,
}

/// Per-seed inputs shared by all arms.
pub struct SeedContext {
    pub seed: u64,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub teachers: Vec<Teacher>,
    pub teacher_streams: Vec<StreamUsage>,
    pub timings: StageTimings,
}

/// Distances and coverage of a distilled set against the real classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillMetrics {
    pub w_per_class: Vec<f64>,
    pub w_mean: f64,
    pub coverage_per_class: Vec<Vec<f64>>,
    pub coverage: Vec<f64>,
}

/// Soft labels for one distilled set together with their `α`.
#[derive(Debug, Clone)]
pub struct Relabeling {
    pub soft: SoftLabelSet,
    pub alpha: AlphaReport,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f();
    *slot += start.elapsed().as_secs_f64();
    out
}

/// Training seed of a pool member for run seed `seed`.
pub fn teacher_seed(seed: u64, letter_index: u64) -> u64 {
    StreamId::derive(seed, Stage::Teachers, letter_index).0
}

/// Trains every pool member on `train` with seeds derived from `seed`.
pub fn train_pool(config: &ExperimentConfig, train: &LabeledDataset, seed: u64) -> Result<(Vec<Teacher>, Vec<StreamUsage>)> {
    let mut teachers = Vec::with_capacity(config.pool.len());
    let mut streams = Vec::with_capacity(config.pool.len());
    for member in &config.pool {
        let (t, usage) = train_teacher_recorded(
            train,
            member.kind,
            teacher_seed(seed, member.seed_index()),
            &config.teacher_training,
            member.id(),
        )
        .map_err(|e| e.in_stage("teachers"))?;
        teachers.push(t);
        streams.push(usage);
    }
    Ok((teachers, streams))
}

/// Draws the dataset and trains the teacher pool for one seed.
pub fn prepare_seed(config: &ExperimentConfig, spec: &GmmSpec, seed: u64) -> Result<SeedContext> {
    let mut timings = StageTimings::default();
    let (train, test) = timed(&mut timings.data, || make_gmm_dataset(spec, seed)).map_err(|e| e.in_stage("data"))?;
    let (teachers, teacher_streams) = timed(&mut timings.teachers, || train_pool(config, &train, seed))?;
    Ok(SeedContext {
        seed,
        train,
        test,
        teachers,
        teacher_streams,
        timings,
    })
}

/// Samples the distilled set; `otg = false` zeroes the OT guidance weight.
pub fn distill(config: &ExperimentConfig, spec: &GmmSpec, train: &LabeledDataset, seed: u64, otg: bool) -> Result<DistilledSet> {
    let weights = GuidanceWeights {
        beta1: if otg { config.guidance.beta1 } else { 0.0 },
        ..config.guidance
    };
    sample_all_classes(spec, train, config.ipc, &weights, &config.sampler, seed).map_err(|e| e.in_stage("distill"))
}

/// Soft labels for `distilled`. With `lia` the teacher subset minimising `α`
/// is used; without it, the whole pool.
pub fn relabel(
    config: &ExperimentConfig,
    train: &LabeledDataset,
    teachers: &[Teacher],
    distilled: &LabeledDataset,
    lia: bool,
) -> Result<Relabeling> {
    let run = || -> Result<Relabeling> {
        if lia {
            let sel = select_teachers(
                config.ipc,
                teachers,
                train,
                distilled,
                config.alpha,
                config.hard_reference,
            )?;
            let chosen: Vec<Teacher> = teachers
                .iter()
                .filter(|t| sel.teachers.contains(&t.id))
                .cloned()
                .collect();
            let soft = soft_label(distilled.points.view(), &chosen)?;
            Ok(Relabeling { soft, alpha: sel.report })
        } else {
            let soft = soft_label(distilled.points.view(), teachers)?;
            let alpha = contraction_alpha(train, distilled, &soft, config.alpha, config.hard_reference)?;
            Ok(Relabeling { soft, alpha })
        }
    };
    run().map_err(|e| e.in_stage("relabel"))
}

/// Trains the student; `otm = false` zeroes the batch OT loss weight.
pub fn train(
    config: &ExperimentConfig,
    distilled: &LabeledDataset,
    soft: &SoftLabelSet,
    otm: bool,
    seed: u64,
) -> Result<StudentRun> {
    let weights = LossWeights {
        beta2: if otm { config.loss.beta2 } else { 0.0 },
        ..config.loss
    };
    train_student(distilled, soft, &config.student, &weights, seed).map_err(|e| e.in_stage("train"))
}

/// Per-class Sinkhorn distance between distilled and real points, and
/// coverage of the real points at each threshold.
pub fn distill_metrics(config: &ExperimentConfig, real: &LabeledDataset, distilled: &LabeledDataset) -> Result<DistillMetrics> {
    let thresholds = config.thresholds();
    let mut w_per_class = Vec::with_capacity(real.num_classes);
    let mut coverage_per_class = Vec::with_capacity(real.num_classes);
    for c in 0..real.num_classes {
        let r = real.class_points(c);
        let d = distilled.class_points(c);
        let cost = cost_matrix(r.view(), d.view(), config.sampler.p)?;
        let lambda = config.w_distill_lambda * cost.mean().max(f64::MIN_POSITIVE);
        let res = sinkhorn_uniform(&cost, lambda, config.w_distill_iters)?;
        w_per_class.push(res.distance);
        coverage_per_class.push(coverage_grid(r.view(), d.view(), &thresholds, config.coverage_p)?);
    }
    let classes = real.num_classes as f64;
    let w_mean = w_per_class.iter().sum::<f64>() / classes;
    let coverage = (0..thresholds.len())
        .map(|k| coverage_per_class.iter().map(|row| row[k]).sum::<f64>() / classes)
        .collect();
    Ok(DistillMetrics {
        w_per_class,
        w_mean,
        coverage_per_class,
        coverage,
    })
}

/// Directory holding one seed's artifacts.
pub fn seed_dir(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config.output_dir.join(format!("seed-{seed}"))
}

fn distilled_name(otg: bool) -> &'static str {
    if otg {
        "distilled-guided.csv"
    } else {
        "distilled-unguided.csv"
    }
}

struct ArtifactWriter<'a> {
    dir: Option<&'a Path>,
}

impl ArtifactWriter<'_> {
    fn write(&self, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        match self.dir {
            Some(dir) => f(dir).map_err(|e| e.in_stage("artifacts")),
            None => Ok(()),
        }
    }
}

/// Runs every arm in `arms` on one seed.
pub fn run_seed(config: &ExperimentConfig, spec: &GmmSpec, seed: u64, arms: &[AblationFlags]) -> Result<Vec<SeedRecord>> {
    let dir = seed_dir(config, seed);
    let out = ArtifactWriter {
        dir: config.write_artifacts.then_some(dir.as_path()),
    };
    let ctx = prepare_seed(config, spec, seed)?;
    out.write(|d| {
        write_dataset(&d.join("train.csv"), &ctx.train)?;
        write_dataset(&d.join("test.csv"), &ctx.test)
    })?;

    let mut distilled: BTreeMap<bool, (DistilledSet, DistillMetrics, f64)> = BTreeMap::new();
    let mut relabeled: BTreeMap<(bool, bool), (Relabeling, f64)> = BTreeMap::new();
    let mut records = Vec::with_capacity(arms.len());
    for &flags in arms {
        let mut timings = ctx.timings;
        if !distilled.contains_key(&flags.otg) {
            let mut secs = 0.0;
            let set = timed(&mut secs, || distill(config, spec, &ctx.train, seed, flags.otg))?;
            let metrics = distill_metrics(config, &ctx.train, &set.data).map_err(|e| e.in_stage("metrics"))?;
            out.write(|d| write_dataset(&d.join(distilled_name(flags.otg)), &set.data))?;
            distilled.insert(flags.otg, (set, metrics, secs));
        }
        let (set, metrics, distill_secs) = &distilled[&flags.otg];
        timings.distill = *distill_secs;

        let key = (flags.otg, flags.lia);
        if !relabeled.contains_key(&key) {
            let mut secs = 0.0;
            let r = timed(&mut secs, || relabel(config, &ctx.train, &ctx.teachers, &set.data, flags.lia))?;
            relabeled.insert(key, (r, secs));
        }
        let (relabeling, relabel_secs) = &relabeled[&key];
        timings.relabel = *relabel_secs;

        let run = timed(&mut timings.train, || train(config, &set.data, &relabeling.soft, flags.otm, seed))?;
        let accuracy = timed(&mut timings.eval, || evaluate(&run.student.model, &ctx.test)).map_err(|e| e.in_stage("eval"))?;

        let arm = flags.arm_name();
        out.write(|d| {
            write_soft_labels(&d.join(format!("soft-{arm}.csv")), &relabeling.soft)?;
            write_json(&d.join(format!("alpha-{arm}.json")), &relabeling.alpha)?;
            write_json(&d.join(format!("student-{arm}.json")), &run.student.model)
        })?;

        let mut streams = ctx.teacher_streams.clone();
        streams.extend(set.streams.iter().copied());
        streams.push(run.stream);
        records.push(SeedRecord {
            run_id: config.run_id.clone(),
            seed,
            flags,
            ipc: config.ipc,
            alpha: relabeling.alpha.alpha,
            accuracy,
            w_distill_mean: metrics.w_mean,
            w_distill_per_class: metrics.w_per_class.clone(),
            coverage: metrics.coverage.clone(),
            coverage_per_class: metrics.coverage_per_class.clone(),
            teachers: relabeling.soft.source_teachers.clone(),
            alpha_report: relabeling.alpha.clone(),
            streams,
            timings,
        });
    }
    Ok(records)
}

/// Runs `task` for every seed on `config.threads` workers and returns the
/// results in seed order. The first failing seed's error is returned.
pub fn for_each_seed<T: Send>(config: &ExperimentConfig, task: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let seeds = &config.seeds;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    let workers = config.threads.clamp(1, seeds.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= seeds.len() {
                    break;
                }
                let result = task(seeds[k]);
                slots.lock().expect("no worker panicked holding the lock")[k] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|slot| slot.expect("every seed ran"))
        .collect()
}

/// Runs all `arms` for every configured seed. `result[a][s]` is arm `a` on
/// the `s`-th seed.
pub fn run_arms(config: &ExperimentConfig, arms: &[AblationFlags]) -> Result<Vec<Vec<SeedRecord>>> {
    config.validate()?;
    if arms.is_empty() {
        return Err(Error::Config("no arms to run".into()));
    }
    let spec = config.gmm_spec()?;
    let per_seed = for_each_seed(config, |seed| run_seed(config, &spec, seed, arms))?;
    let mut by_arm: Vec<Vec<SeedRecord>> = arms.iter().map(|_| Vec::with_capacity(per_seed.len())).collect();
    for records in per_seed {
        for (a, r) in records.into_iter().enumerate() {
            by_arm[a].push(r);
        }
    }
    Ok(by_arm)
}

/// The four arms of the ablation: full, then each flag switched off.
pub fn ablation_arms() -> [AblationFlags; 4] {
    let full = AblationFlags::FULL;
    [
        full,
        AblationFlags { otg: false, ..full },
        AblationFlags { lia: false, ..full },
        AblationFlags { otm: false, ..full },
    ]
}
