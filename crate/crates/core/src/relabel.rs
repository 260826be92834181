//! Teacher ensembles, soft relabeling and the label-image contraction factor.
//!
//! The contraction factor compares two class-wise transport problems between
//! real latents and distilled latents. For class `c` the real side carries
//! mass `H[:, c]` (one-hot labels) and the distilled side carries `S[:, c]`
//! (soft labels), each normalised to a probability vector. The averaged
//! transport cost with soft labels divided by the same quantity with hard
//! labels is `α`; below 1 the soft labels sit closer to the real
//! label-image distribution.

use itertools::Itertools;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{one_hot, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{argmax, log_softmax_rows, softmax_rows, Classifier, ModelKind};
use crate::optim::AdamW;
use crate::ot::{cost_matrix, sinkhorn_marginals, CostMatrix, DEFAULT_DELTA};
use crate::rng::{CountingRng, Stage, StreamUsage};

/// Largest pool searched exhaustively by [`select_teachers`].
pub const MAX_POOL: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Teacher {
    pub id: String,
    pub train_seed: u64,
    pub model: Classifier,
}

impl Teacher {
    pub fn kind(&self) -> ModelKind {
        self.model.kind
    }

    /// A teacher whose logits are identically zero, i.e. uniform soft labels.
    pub fn uniform(id: impl Into<String>, input_dim: usize, num_classes: usize) -> Result<Self> {
        let n = Classifier::param_count(ModelKind::LinearSoftmax, input_dim, num_classes);
        Ok(Self {
            id: id.into(),
            train_seed: 0,
            model: Classifier::from_params(ModelKind::LinearSoftmax, input_dim, num_classes, Array1::zeros(n))?,
        })
    }

    pub fn logits(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.model.forward(points)
    }
}

/// Settings for fitting one teacher with softmax cross-entropy and Adam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherTraining {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TeacherTraining {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 0.01,
            batch_size: 64,
        }
    }
}

/// Trains a teacher of `kind` on `train`. Initialisation and batch order are
/// drawn from the `(seed, teachers, 0)` stream.
pub fn train_teacher(
    train: &LabeledDataset,
    kind: ModelKind,
    seed: u64,
    epochs: usize,
    lr: f64,
) -> Result<Teacher> {
    let settings = TeacherTraining {
        epochs,
        lr,
        ..TeacherTraining::default()
    };
    train_teacher_with(train, kind, seed, &settings, format!("{kind}-{seed:x}"))
}

pub fn train_teacher_with(
    train: &LabeledDataset,
    kind: ModelKind,
    seed: u64,
    settings: &TeacherTraining,
    id: String,
) -> Result<Teacher> {
    train_teacher_recorded(train, kind, seed, settings, id).map(|(t, _)| t)
}

/// [`train_teacher_with`] that also reports how much of its stream it used.
pub fn train_teacher_recorded(
    train: &LabeledDataset,
    kind: ModelKind,
    seed: u64,
    settings: &TeacherTraining,
    id: String,
) -> Result<(Teacher, StreamUsage)> {
    if train.is_empty() {
        return Err(Error::InvalidInput("teacher training set is empty".into()));
    }
    if !(settings.lr.is_finite() && settings.lr > 0.0) || settings.batch_size == 0 {
        return Err(Error::Config(format!("invalid teacher training settings {settings:?}")));
    }
    let mut rng = CountingRng::new(seed, Stage::Teachers, 0);
    let mut model = Classifier::init(kind, train.dim(), train.num_classes, &mut rng)?;
    let mut opt = AdamW::new(model.params.len(), 0.0);
    let targets = train.one_hot();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(settings.batch_size) {
            let x = train.points.select(Axis(0), chunk);
            let y = targets.select(Axis(0), chunk);
            let cache = model.forward_cached(x.view())?;
            let probs = softmax_rows(cache.logits.view());
            let grad_logits = (&probs - &y) / chunk.len() as f64;
            let grad = model.backward(x.view(), &cache, grad_logits.view());
            opt.step(&mut model.params, &grad, settings.lr);
        }
        if !model.is_finite() {
            return Err(Error::TrainingDiverged(format!("teacher {id} at epoch {epoch}")));
        }
    }
    let usage = StreamUsage::of(Stage::Teachers, 0, &rng);
    Ok((
        Teacher {
            id,
            train_seed: seed,
            model,
        },
        usage,
    ))
}

/// Mean softmax cross-entropy of `model` on `data`.
pub fn cross_entropy(model: &Classifier, data: &LabeledDataset) -> Result<f64> {
    let lp = log_softmax_rows(model.forward(data.points.view())?.view());
    let total: f64 = data.labels.iter().enumerate().map(|(i, &c)| -lp[[i, c]]).sum();
    Ok(total / data.len() as f64)
}

/// Per-sample class probabilities together with the teachers that made them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelSet {
    pub labels: Array2<f64>,
    pub source_teachers: Vec<String>,
}

/// Tolerance for treating a row as already normalised.
const ROW_SUM_TOL: f64 = 1e-9;

fn is_stochastic(rows: ArrayView2<'_, f64>) -> bool {
    rows.axis_iter(Axis(0))
        .all(|r| r.iter().all(|v| *v >= 0.0 && v.is_finite()) && (r.sum() - 1.0).abs() <= ROW_SUM_TOL)
}

impl SoftLabelSet {
    /// Takes probability rows as they are; anything else is read as logits
    /// and softmaxed.
    pub fn from_rows(rows: Array2<f64>, source_teachers: Vec<String>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("soft labels must be finite".into()));
        }
        let labels = if is_stochastic(rows.view()) {
            rows
        } else {
            softmax_rows(rows.view())
        };
        Ok(Self {
            labels,
            source_teachers,
        })
    }

    /// One-hot rows, sourced from no teacher.
    pub fn hard(labels: &[usize], num_classes: usize) -> Self {
        Self {
            labels: one_hot(labels, num_classes),
            source_teachers: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.nrows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.labels.ncols()
    }

    /// One-hot projection onto each row's argmax (lowest index on ties).
    pub fn argmax_projection(&self) -> Array2<f64> {
        let classes: Vec<usize> = self.labels.axis_iter(Axis(0)).map(argmax).collect();
        one_hot(&classes, self.num_classes())
    }
}

/// Softmax of the teachers' averaged logits.
pub fn soft_label(points: ArrayView2<'_, f64>, teachers: &[Teacher]) -> Result<SoftLabelSet> {
    let logits: Vec<Array2<f64>> = teachers.iter().map(|t| t.logits(points)).collect::<Result<_>>()?;
    soft_label_from_logits(&logits, teachers.iter().map(|t| t.id.clone()).collect())
}

fn soft_label_from_logits(logits: &[Array2<f64>], ids: Vec<String>) -> Result<SoftLabelSet> {
    let Some(first) = logits.first() else {
        return Err(Error::InvalidInput("soft labeling needs at least one teacher".into()));
    };
    let mut avg = Array2::<f64>::zeros(first.raw_dim());
    for l in logits {
        avg += l;
    }
    avg /= logits.len() as f64;
    Ok(SoftLabelSet {
        labels: softmax_rows(avg.view()),
        source_teachers: ids,
    })
}

/// Which hard labels define the denominator of `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HardReference {
    /// The argmax projection of the soft labels.
    ArgmaxProjection,
    /// The class each distilled latent was generated for.
    GenerationLabels,
}

/// Entropy and iteration settings for the class-wise transport problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSettings {
    /// `ε = epsilon_factor · mean(C)` over the shared cost matrix.
    pub epsilon_factor: f64,
    pub iterations: usize,
    pub delta: f64,
    pub p: f64,
}

impl Default for AlphaSettings {
    fn default() -> Self {
        Self {
            epsilon_factor: 0.1,
            iterations: 100,
            delta: DEFAULT_DELTA,
            p: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCost {
    pub class: usize,
    /// `None` when the class was skipped on that side.
    pub soft: Option<f64>,
    pub hard: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub w_soft: f64,
    pub w_hard: f64,
    pub alpha: f64,
    pub per_class: Vec<ClassCost>,
    /// Worst marginal violation over all class-wise plans.
    pub max_marginal_violation: f64,
}

/// Real latents with hard labels and the distilled latents, plus the cost
/// matrix between them, reusable across many label matrices.
pub struct AlphaProblem<'a> {
    real_labels: &'a [usize],
    num_classes: usize,
    cost: CostMatrix,
    epsilon: f64,
    settings: AlphaSettings,
}

impl<'a> AlphaProblem<'a> {
    pub fn new(
        real_points: ArrayView2<'_, f64>,
        real_labels: &'a [usize],
        num_classes: usize,
        distilled_points: ArrayView2<'_, f64>,
        settings: AlphaSettings,
    ) -> Result<Self> {
        if real_labels.len() != real_points.nrows() {
            return Err(Error::SizeMismatch(format!(
                "{} real labels for {} points",
                real_labels.len(),
                real_points.nrows()
            )));
        }
        if real_labels.iter().any(|&c| c >= num_classes) {
            return Err(Error::InvalidInput("real label out of range".into()));
        }
        if !(settings.epsilon_factor.is_finite() && settings.epsilon_factor > 0.0) {
            return Err(Error::Config(format!("alpha epsilon factor must be positive, got {}", settings.epsilon_factor)));
        }
        let cost = cost_matrix(real_points, distilled_points, settings.p)?;
        let mean = cost.mean();
        let epsilon = if mean > 0.0 { settings.epsilon_factor * mean } else { settings.epsilon_factor };
        Ok(Self {
            real_labels,
            num_classes,
            cost,
            epsilon,
            settings,
        })
    }

    /// Class-wise transport costs for distilled label matrix `s`; `None`
    /// marks classes with no mass on either side.
    pub fn class_costs(&self, s: ArrayView2<'_, f64>) -> Result<ClassCosts> {
        if s.nrows() != self.cost.ncols() || s.ncols() != self.num_classes {
            return Err(Error::SizeMismatch(format!(
                "label matrix is {}x{}, expected {}x{}",
                s.nrows(),
                s.ncols(),
                self.cost.ncols(),
                self.num_classes
            )));
        }
        let mut violation = 0.0f64;
        let costs = (0..self.num_classes)
            .map(|c| {
                let rows: Vec<usize> = (0..self.real_labels.len()).filter(|&i| self.real_labels[i] == c).collect();
                let col = s.column(c);
                let cols: Vec<usize> = (0..col.len()).filter(|&j| col[j] > 0.0).collect();
                if rows.is_empty() || cols.is_empty() {
                    return Ok(None);
                }
                // Zero-mass rows and columns get zero scaling and drop out.
                let sub = self.cost.select_rows(&rows).transpose().select_rows(&cols).transpose();
                let a = Array1::from_elem(rows.len(), 1.0 / rows.len() as f64);
                let mass: f64 = cols.iter().map(|&j| col[j]).sum();
                let b: Array1<f64> = cols.iter().map(|&j| col[j] / mass).collect();
                let r = sinkhorn_marginals(&sub, a.view(), b.view(), self.epsilon, self.settings.iterations, self.settings.delta)?;
                violation = violation.max(r.max_marginal_violation);
                Ok(Some(r.distance))
            })
            .collect::<Result<_>>()?;
        Ok(ClassCosts { costs, violation })
    }

    /// `α` of `soft` against `hard`.
    pub fn report(&self, soft: ArrayView2<'_, f64>, hard: ArrayView2<'_, f64>) -> Result<AlphaReport> {
        let s = self.class_costs(soft)?;
        let h = self.class_costs(hard)?;
        report_from_costs(s, h)
    }
}

/// Per-class costs plus the worst marginal violation among them.
#[derive(Debug, Clone)]
pub struct ClassCosts {
    pub costs: Vec<Option<f64>>,
    pub violation: f64,
}

fn mean_valid(costs: &[Option<f64>]) -> Result<f64> {
    let valid: Vec<f64> = costs.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::NoValidClasses);
    }
    Ok(valid.iter().sum::<f64>() / valid.len() as f64)
}

fn report_from_costs(soft: ClassCosts, hard: ClassCosts) -> Result<AlphaReport> {
    let max_marginal_violation = soft.violation.max(hard.violation);
    let (soft, hard) = (soft.costs, hard.costs);
    let w_soft = mean_valid(&soft)?;
    let w_hard = mean_valid(&hard)?;
    let alpha = if w_soft == w_hard {
        1.0
    } else if w_hard > 0.0 {
        w_soft / w_hard
    } else {
        f64::INFINITY
    };
    Ok(AlphaReport {
        w_soft,
        w_hard,
        alpha,
        per_class: soft
            .into_iter()
            .zip(hard)
            .enumerate()
            .map(|(class, (soft, hard))| ClassCost { class, soft, hard })
            .collect(),
        max_marginal_violation,
    })
}

/// Contraction factor of `soft` labels on `distilled` latents relative to
/// hard labels, against the real latents and their labels.
pub fn contraction_alpha(
    real: &LabeledDataset,
    distilled: &LabeledDataset,
    soft: &SoftLabelSet,
    settings: AlphaSettings,
    reference: HardReference,
) -> Result<AlphaReport> {
    if soft.len() != distilled.len() {
        return Err(Error::SizeMismatch(format!(
            "{} soft labels for {} distilled latents",
            soft.len(),
            distilled.len()
        )));
    }
    let problem = AlphaProblem::new(real.points.view(), &real.labels, real.num_classes, distilled.points.view(), settings)?;
    let hard = match reference {
        HardReference::ArgmaxProjection => soft.argmax_projection(),
        HardReference::GenerationLabels => distilled.one_hot(),
    };
    problem.report(soft.labels.view(), hard.view())
}

/// Result of the exhaustive teacher-subset search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSelection {
    pub ipc: usize,
    /// Ids of the chosen subset, sorted.
    pub teachers: Vec<String>,
    pub report: AlphaReport,
    /// Every subset tried with its `α`, in enumeration order.
    pub evaluated: Vec<(Vec<String>, f64)>,
}

/// Picks the nonempty subset of `pool` minimising `α` on `distilled`.
/// Ties go to the smaller subset, then to the lexicographically smaller
/// sorted id list.
pub fn select_teachers(
    ipc: usize,
    pool: &[Teacher],
    real: &LabeledDataset,
    distilled: &LabeledDataset,
    settings: AlphaSettings,
    reference: HardReference,
) -> Result<TeacherSelection> {
    if pool.is_empty() {
        return Err(Error::InvalidInput("teacher pool is empty".into()));
    }
    if pool.len() > MAX_POOL {
        return Err(Error::InvalidInput(format!(
            "teacher pool of {} exceeds the exhaustive-search limit {MAX_POOL}",
            pool.len()
        )));
    }
    let problem = AlphaProblem::new(real.points.view(), &real.labels, real.num_classes, distilled.points.view(), settings)?;
    let logits: Vec<Array2<f64>> = pool
        .iter()
        .map(|t| t.logits(distilled.points.view()))
        .collect::<Result<_>>()?;
    let generation = distilled.one_hot();
    let fixed_hard = match reference {
        HardReference::GenerationLabels => Some(problem.class_costs(generation.view())?),
        HardReference::ArgmaxProjection => None,
    };

    let mut best: Option<(f64, usize, Vec<String>, AlphaReport)> = None;
    let mut evaluated = Vec::new();
    for size in 1..=pool.len() {
        for subset in (0..pool.len()).combinations(size) {
            let ls: Vec<Array2<f64>> = subset.iter().map(|&i| logits[i].clone()).collect();
            let mut ids: Vec<String> = subset.iter().map(|&i| pool[i].id.clone()).collect();
            ids.sort();
            let soft = soft_label_from_logits(&ls, ids.clone())?;
            let soft_costs = problem.class_costs(soft.labels.view())?;
            let hard_costs = match &fixed_hard {
                Some(h) => h.clone(),
                None => problem.class_costs(soft.argmax_projection().view())?,
            };
            let report = report_from_costs(soft_costs, hard_costs)?;
            evaluated.push((ids.clone(), report.alpha));
            let better = match &best {
                None => true,
                Some((a, n, best_ids, _)) => {
                    report.alpha < *a || (report.alpha == *a && (size < *n || (size == *n && ids < *best_ids)))
                }
            };
            if better {
                best = Some((report.alpha, size, ids, report));
            }
        }
    }
    let (_, _, teachers, report) = best.expect("pool is nonempty");
    Ok(TeacherSelection {
        ipc,
        teachers,
        report,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::ot::exact_ot_2x2;
    use ndarray::array;

    fn two_class_real() -> LabeledDataset {
        LabeledDataset::new(array![[0.0], [1.0], [5.0], [6.0]], vec![0, 0, 1, 1], 2, Split::Train).unwrap()
    }

    #[test]
    fn soft_label_cases() {
        let x = array![[1.0, -0.5], [0.2, 0.3]];
        let mut t = Teacher::uniform("t", 2, 3).unwrap();
        t.model.params = Array1::from_vec((0..9).map(|k| k as f64 * 0.1 - 0.4).collect());
        let one = soft_label(x.view(), std::slice::from_ref(&t)).unwrap();
        let direct = softmax_rows(t.logits(x.view()).unwrap().view());
        assert_eq!(one.labels, direct);
        let two = soft_label(x.view(), &[t.clone(), t.clone()]).unwrap();
        for (a, b) in two.labels.iter().zip(one.labels.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut neg = t.clone();
        neg.model.params.mapv_inplace(|v| -v);
        let cancel = soft_label(x.view(), &[t, neg]).unwrap();
        assert!(cancel.labels.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(soft_label(x.view(), &[]).is_err());
    }

    #[test]
    fn from_rows_keeps_probabilities_and_softmaxes_logits() {
        let p = array![[0.2, 0.8], [1.0, 0.0]];
        assert_eq!(SoftLabelSet::from_rows(p.clone(), vec![]).unwrap().labels, p);
        let l = array![[0.0, 0.0]];
        assert_eq!(SoftLabelSet::from_rows(l, vec![]).unwrap().labels, array![[0.5, 0.5]]);
    }

    #[test]
    fn one_hot_soft_labels_give_alpha_one() {
        let real = two_class_real();
        let distilled = LabeledDataset::new(array![[0.5], [5.5], [1.0]], vec![0, 1, 0], 2, Split::Distilled).unwrap();
        let soft = SoftLabelSet::hard(&distilled.labels, 2);
        for reference in [HardReference::ArgmaxProjection, HardReference::GenerationLabels] {
            let r = contraction_alpha(&real, &distilled, &soft, AlphaSettings::default(), reference).unwrap();
            assert_eq!(r.alpha, 1.0);
            assert_eq!(r.w_soft, r.w_hard);
        }
    }

    #[test]
    fn two_by_two_classes_match_closed_form() {
        let real = LabeledDataset::new(array![[0.0], [1.0], [2.0], [3.0]], vec![0, 0, 1, 1], 2, Split::Train).unwrap();
        let distilled = LabeledDataset::new(array![[0.4], [2.6]], vec![0, 1], 2, Split::Distilled).unwrap();
        let soft = SoftLabelSet::from_rows(array![[0.7, 0.3], [0.4, 0.6]], vec![]).unwrap();
        let settings = AlphaSettings {
            epsilon_factor: 0.08,
            iterations: 2000,
            ..AlphaSettings::default()
        };
        let r = contraction_alpha(&real, &distilled, &soft, settings, HardReference::GenerationLabels).unwrap();
        let c = cost_matrix(real.points.view(), distilled.points.view(), 1.0).unwrap();
        let half = array![0.5, 0.5];
        let s0 = exact_ot_2x2(c.select_rows(&[0, 1]).values(), half.view(), array![0.7 / 1.1, 0.4 / 1.1].view()).unwrap();
        let s1 = exact_ot_2x2(c.select_rows(&[2, 3]).values(), half.view(), array![0.3 / 0.9, 0.6 / 0.9].view()).unwrap();
        // Hard labels put each class on its own distilled point.
        let h0 = 0.5 * (0.4 + 0.6);
        let h1 = 0.5 * (0.6 + 0.4);
        let expected = ((s0 + s1) / 2.0) / ((h0 + h1) / 2.0);
        assert!((r.alpha - expected).abs() < 1e-3, "{} vs {expected}", r.alpha);
        assert!(r.max_marginal_violation < 1e-4);
    }

    #[test]
    fn empty_sides_are_skipped_or_refused() {
        let real = two_class_real();
        let distilled = LabeledDataset::new(array![[0.2]], vec![0], 2, Split::Distilled).unwrap();
        let soft = SoftLabelSet::hard(&[0], 2);
        let r = contraction_alpha(&real, &distilled, &soft, AlphaSettings::default(), HardReference::GenerationLabels)
            .unwrap();
        assert_eq!(r.per_class[1].soft, None);
        assert!(r.per_class[0].soft.is_some());
        let problem = AlphaProblem::new(real.points.view(), &real.labels, 2, distilled.points.view(), AlphaSettings::default())
            .unwrap();
        let zeros = Array2::<f64>::zeros((1, 2));
        assert!(matches!(problem.report(zeros.view(), zeros.view()), Err(Error::NoValidClasses)));
    }

    #[test]
    fn selection_of_single_and_uniform_pools() {
        let real = two_class_real();
        let distilled = LabeledDataset::new(array![[0.5], [5.5]], vec![0, 1], 2, Split::Distilled).unwrap();
        let mut good = Teacher::uniform("good", 1, 2).unwrap();
        // Logit difference grows with x: class 1 for large x.
        good.model.params = array![-2.0, 2.0, 6.0, -6.0];
        let flat = Teacher::uniform("flat", 1, 2).unwrap();
        let one = select_teachers(1, std::slice::from_ref(&flat), &real, &distilled, AlphaSettings::default(), HardReference::GenerationLabels)
            .unwrap();
        assert_eq!(one.teachers, vec!["flat".to_string()]);
        let both = select_teachers(1, &[flat, good], &real, &distilled, AlphaSettings::default(), HardReference::GenerationLabels)
            .unwrap();
        assert_eq!(both.evaluated.len(), 3);
        assert_ne!(both.teachers, vec!["flat".to_string()]);
        assert!(select_teachers(1, &[], &real, &distilled, AlphaSettings::default(), HardReference::GenerationLabels).is_err());
    }

    #[test]
    fn teacher_training_is_deterministic_and_separates() {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for k in 0..40 {
            let s = (k as f64) * 0.05;
            pts.extend([-3.0 + s, -3.0 - s]);
            labels.push(0);
            pts.extend([3.0 - s, 3.0 + s]);
            labels.push(1);
        }
        let data = LabeledDataset::new(Array2::from_shape_vec((80, 2), pts).unwrap(), labels, 2, Split::Train).unwrap();
        let a = train_teacher(&data, ModelKind::LinearSoftmax, 9, 50, 0.05).unwrap();
        let b = train_teacher(&data, ModelKind::LinearSoftmax, 9, 50, 0.05).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.model.predict(data.points.view()).unwrap(), data.labels);
    }
}
