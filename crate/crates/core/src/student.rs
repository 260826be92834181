//! Student training on a distilled set.
//!
//! The per-batch objective is
//! `κ1·CE(y, q) + κ2·MSE(t, q) + β2·⟨P, C(t, q)⟩` with `q = softmax(s)`,
//! `s` the student logits and `t` the soft labels. `P` is the Sinkhorn plan
//! between the batch's soft-label rows and prediction rows; it is held
//! fixed when differentiating.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{log_softmax_rows, softmax_backward, softmax_rows, Classifier, ModelKind};
use crate::optim::{AdamW, WarmupCosine};
use crate::ot::{cost_matrix, lp_distance_grad, sinkhorn_uniform, TransportPlan};
use crate::relabel::SoftLabelSet;
use crate::rng::{CountingRng, Stage, StreamUsage};

/// What the MSE term compares against the soft labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MseOperand {
    /// Student probabilities `softmax(s)`.
    Probabilities,
    /// Raw student logits `s`.
    Logits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub kappa1: f64,
    pub kappa2: f64,
    pub beta2: f64,
    pub lambda2: f64,
    pub sinkhorn_iters: usize,
    pub p: f64,
    pub mse_operand: MseOperand,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kappa1: 1.0,
            kappa2: 0.025,
            beta2: 0.1,
            lambda2: 0.1,
            sinkhorn_iters: 20,
            p: 1.0,
            mse_operand: MseOperand::Probabilities,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(nonneg(self.kappa1) && nonneg(self.kappa2) && nonneg(self.beta2)) {
            return Err(Error::Config(format!("loss weights must be nonnegative: {self:?}")));
        }
        if !(self.lambda2.is_finite() && self.lambda2 > 0.0) || self.sinkhorn_iters == 0 || self.p < 1.0 {
            return Err(Error::Config(format!("invalid batch OT settings: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLoss {
    pub ce: f64,
    pub mse: f64,
    /// Batch OT term; 0 when `β2 = 0` and the term is not evaluated.
    pub sd: f64,
    pub total: f64,
}

fn as_probabilities(rows: ArrayView2<'_, f64>) -> Array2<f64> {
    let stochastic = rows
        .axis_iter(Axis(0))
        .all(|r| r.iter().all(|v| *v >= 0.0) && (r.sum() - 1.0).abs() <= 1e-9);
    if stochastic {
        rows.to_owned()
    } else {
        softmax_rows(rows)
    }
}

/// Sinkhorn distance between soft-label rows `t` and the student's
/// predicted distributions `softmax(s)`, with uniform `1/b` marginals.
/// Rows of `t` that are already probability vectors are used as they are.
pub fn batch_ot_loss(
    t: ArrayView2<'_, f64>,
    s: ArrayView2<'_, f64>,
    lambda2: f64,
    iterations: usize,
    p: f64,
) -> Result<(f64, TransportPlan)> {
    if t.nrows() == 0 || t.dim() != s.dim() {
        return Err(Error::SizeMismatch(format!(
            "soft labels {:?} and logits {:?} must be equal nonempty shapes",
            t.dim(),
            s.dim()
        )));
    }
    let tp = as_probabilities(t);
    let q = softmax_rows(s);
    let cost = cost_matrix(tp.view(), q.view(), p)?;
    let r = sinkhorn_uniform(&cost, lambda2, iterations)?;
    Ok((r.distance, r.plan))
}

/// Gradient of `⟨P, C(t, softmax(s))⟩` with respect to the logits `s`,
/// with `P` fixed.
fn batch_ot_logit_grad(tp: ArrayView2<'_, f64>, q: ArrayView2<'_, f64>, plan: &TransportPlan, p: f64) -> Array2<f64> {
    let coupling = plan.coupling();
    let mut gq = Array2::<f64>::zeros(q.raw_dim());
    for (j, mut g) in gq.axis_iter_mut(Axis(0)).enumerate() {
        for (i, ti) in tp.axis_iter(Axis(0)).enumerate() {
            let w = coupling[[i, j]];
            if w != 0.0 {
                g.scaled_add(w, &lp_distance_grad(q.row(j), ti, p));
            }
        }
    }
    softmax_backward(q, gq.view())
}

/// Inputs of one training batch.
pub struct Batch<'a> {
    pub x: ArrayView2<'a, f64>,
    /// One-hot hard labels.
    pub y: ArrayView2<'a, f64>,
    /// Soft labels.
    pub t: ArrayView2<'a, f64>,
}

fn check_batch(batch: &Batch<'_>, model: &Classifier) -> Result<()> {
    let b = batch.x.nrows();
    if b == 0 {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let c = model.num_classes;
    if batch.y.dim() != (b, c) || batch.t.dim() != (b, c) {
        return Err(Error::SizeMismatch(format!(
            "batch of {b} needs {b}x{c} label matrices, got {:?} and {:?}",
            batch.y.dim(),
            batch.t.dim()
        )));
    }
    Ok(())
}

/// Loss and gradients for a fixed plan, or a fresh plan when `plan` is None.
fn loss_and_grads_inner(
    batch: &Batch<'_>,
    model: &Classifier,
    w: &LossWeights,
    plan: Option<&TransportPlan>,
    want_grad: bool,
) -> Result<(BatchLoss, Option<Array1<f64>>, Option<TransportPlan>)> {
    check_batch(batch, model)?;
    let b = batch.x.nrows() as f64;
    let cache = model.forward_cached(batch.x)?;
    let s = &cache.logits;
    let q = softmax_rows(s.view());
    let mut grad_s = Array2::<f64>::zeros(s.raw_dim());

    let lq = log_softmax_rows(s.view());
    let ce = -(&batch.y * &lq).sum() / b;
    if w.kappa1 != 0.0 {
        grad_s.scaled_add(w.kappa1 / b, &(&q - &batch.y));
    }

    let tp = as_probabilities(batch.t);
    let n_el = tp.len() as f64;
    let (mse, mse_grad) = match w.mse_operand {
        MseOperand::Probabilities => {
            let diff = &q - &tp;
            let g = softmax_backward(q.view(), (&diff * (2.0 / n_el)).view());
            ((&diff * &diff).sum() / n_el, g)
        }
        MseOperand::Logits => {
            let diff = s - &tp;
            ((&diff * &diff).sum() / n_el, &diff * (2.0 / n_el))
        }
    };
    if w.kappa2 != 0.0 {
        grad_s.scaled_add(w.kappa2, &mse_grad);
    }

    let mut used_plan = None;
    let sd = if w.beta2 != 0.0 {
        let (sd, plan) = match plan {
            Some(p) => {
                let cost = cost_matrix(tp.view(), q.view(), w.p)?;
                (p.cost(&cost), p.clone())
            }
            None => batch_ot_loss(tp.view(), s.view(), w.lambda2, w.sinkhorn_iters, w.p)?,
        };
        if want_grad {
            grad_s.scaled_add(w.beta2, &batch_ot_logit_grad(tp.view(), q.view(), &plan, w.p));
        }
        used_plan = Some(plan);
        sd
    } else {
        0.0
    };

    let total = w.kappa1 * ce + w.kappa2 * mse + w.beta2 * sd;
    if !total.is_finite() {
        return Err(Error::TrainingDiverged(format!("non-finite batch loss (ce {ce}, mse {mse}, sd {sd})")));
    }
    let loss = BatchLoss { ce, mse, sd, total };
    let grad = want_grad.then(|| model.backward(batch.x, &cache, grad_s.view()));
    Ok((loss, grad, used_plan))
}

/// Batch loss and its gradient with respect to the model's flat parameters.
pub fn total_loss_and_grads(batch: &Batch<'_>, model: &Classifier, weights: &LossWeights) -> Result<(BatchLoss, Array1<f64>)> {
    let (loss, grad, _) = loss_and_grads_inner(batch, model, weights, None, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

/// Like [`total_loss_and_grads`] but also returns the plan it used.
pub fn total_loss_grads_and_plan(
    batch: &Batch<'_>,
    model: &Classifier,
    weights: &LossWeights,
) -> Result<(BatchLoss, Array1<f64>, Option<TransportPlan>)> {
    let (loss, grad, plan) = loss_and_grads_inner(batch, model, weights, None, true)?;
    Ok((loss, grad.expect("gradient requested"), plan))
}

/// The batch objective with the OT plan frozen to `plan`.
pub fn fixed_plan_loss(batch: &Batch<'_>, model: &Classifier, weights: &LossWeights, plan: &TransportPlan) -> Result<BatchLoss> {
    Ok(loss_and_grads_inner(batch, model, weights, Some(plan), false)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentSettings {
    pub kind: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub warmup_frac: f64,
    /// EMA decay of parameters; `None` disables the EMA copy.
    pub ema: Option<f64>,
}

impl Default for StudentSettings {
    fn default() -> Self {
        Self {
            kind: ModelKind::Mlp { hidden: 32 },
            epochs: 200,
            batch_size: 20,
            lr: 0.001,
            weight_decay: 1e-4,
            warmup_frac: 0.05,
            ema: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentModel {
    pub model: Classifier,
    pub optimizer: AdamW,
    pub ema: Option<Classifier>,
}

#[derive(Debug, Clone)]
pub struct StudentRun {
    pub student: StudentModel,
    /// Mean batch total per epoch.
    pub epoch_losses: Vec<f64>,
    pub stream: StreamUsage,
}

/// Trains a fresh student on `distilled` with `soft` labels. Initialisation
/// and batch order come from the `(seed, student, 0)` stream; the last
/// short batch of each epoch is dropped.
pub fn train_student(
    distilled: &LabeledDataset,
    soft: &SoftLabelSet,
    settings: &StudentSettings,
    weights: &LossWeights,
    seed: u64,
) -> Result<StudentRun> {
    weights.validate()?;
    let n = distilled.len();
    if soft.len() != n || soft.num_classes() != distilled.num_classes {
        return Err(Error::SizeMismatch(format!(
            "{} soft labels over {} classes for {n} points over {} classes",
            soft.len(),
            soft.num_classes(),
            distilled.num_classes
        )));
    }
    if settings.batch_size == 0 || n < settings.batch_size {
        return Err(Error::Config(format!(
            "batch size {} must be in 1..={n}",
            settings.batch_size
        )));
    }
    if !(settings.lr.is_finite() && settings.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", settings.lr)));
    }
    let mut rng = CountingRng::new(seed, Stage::Student, 0);
    let mut model = Classifier::init(settings.kind, distilled.dim(), distilled.num_classes, &mut rng)?;
    let mut optimizer = AdamW::new(model.params.len(), settings.weight_decay);
    let mut ema = settings.ema.map(|_| model.clone());
    let y = distilled.one_hot();
    let steps_per_epoch = n / settings.batch_size;
    let schedule = WarmupCosine {
        base_lr: settings.lr,
        total_steps: steps_per_epoch * settings.epochs,
        warmup_frac: settings.warmup_frac,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(settings.epochs);
    let mut step = 0;
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks_exact(settings.batch_size) {
            let x = distilled.points.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let tb = soft.labels.select(Axis(0), chunk);
            let batch = Batch {
                x: x.view(),
                y: yb.view(),
                t: tb.view(),
            };
            let (loss, grad) = total_loss_and_grads(&batch, &model, weights)
                .map_err(|e| match e {
                    Error::TrainingDiverged(m) => Error::TrainingDiverged(format!("epoch {epoch}: {m}")),
                    other => other,
                })?;
            optimizer.step(&mut model.params, &grad, schedule.lr(step));
            step += 1;
            if !model.is_finite() {
                return Err(Error::TrainingDiverged(format!("non-finite parameters at epoch {epoch}")));
            }
            if let (Some(e), Some(decay)) = (ema.as_mut(), settings.ema) {
                e.params.zip_mut_with(&model.params, |a, &p| *a = decay * *a + (1.0 - decay) * p);
            }
            sum += loss.total;
        }
        epoch_losses.push(sum / steps_per_epoch as f64);
    }
    Ok(StudentRun {
        student: StudentModel {
            model,
            optimizer,
            ema,
        },
        epoch_losses,
        stream: StreamUsage::of(Stage::Student, 0, &rng),
    })
}

/// Top-1 accuracy; ties go to the lowest class index.
pub fn evaluate(model: &Classifier, test: &LabeledDataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    let pred = model.predict(test.points.view())?;
    let correct = pred.iter().zip(&test.labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::ot::exact_ot_assignment;
    use ndarray::array;

    #[test]
    fn single_row_loss_is_the_distance() {
        let t = array![[0.2, 0.8]];
        let s = array![[0.0, 0.0]];
        let (l, _) = batch_ot_loss(t.view(), s.view(), 0.1, 20, 1.0).unwrap();
        assert!((l - 0.6).abs() < 1e-15);
        let (l, _) = batch_ot_loss(array![[1.0, 3.0]].view(), array![[1.0, 3.0]].view(), 0.1, 20, 1.0).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn equal_logits_reach_entropic_floor() {
        let t = array![[2.0, -1.0, 0.0], [0.0, 0.5, 3.0]];
        let (l, _) = batch_ot_loss(t.view(), t.view(), 1e-3, 200, 1.0).unwrap();
        let exact = exact_ot_assignment(softmax_rows(t.view()).view(), softmax_rows(t.view()).view(), 1.0).unwrap();
        assert_eq!(exact, 0.0);
        assert!(l <= 1e-3);
    }

    #[test]
    fn swapped_corners_cost_nothing() {
        let t = array![[1.0, 0.0], [0.0, 1.0]];
        let s = array![[-20.0, 20.0], [20.0, -20.0]];
        let (l, _) = batch_ot_loss(t.view(), s.view(), 1e-2, 200, 1.0).unwrap();
        assert!(l <= 0.05, "{l}");
    }

    #[test]
    fn mse_gradient_vanishes_at_its_minimum() {
        let mut rng = CountingRng::new(1, Stage::Student, 9);
        let m = Classifier::init(ModelKind::Mlp { hidden: 4 }, 3, 3, &mut rng).unwrap();
        let x = array![[0.1, 0.4, -1.0], [2.0, 0.0, 0.3]];
        let t = softmax_rows(m.forward(x.view()).unwrap().view());
        let y = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let w = LossWeights {
            kappa1: 0.0,
            kappa2: 1.0,
            beta2: 0.0,
            ..LossWeights::default()
        };
        let (loss, g) = total_loss_and_grads(&Batch { x: x.view(), y: y.view(), t: t.view() }, &m, &w).unwrap();
        assert!(loss.mse < 1e-30);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn evaluation_tie_breaks_to_class_zero() {
        let m = Classifier::from_params(ModelKind::LinearSoftmax, 2, 2, Array1::zeros(6)).unwrap();
        let test = LabeledDataset::new(array![[0.0, 1.0], [1.0, 0.0]], vec![0, 1], 2, Split::Test).unwrap();
        assert_eq!(evaluate(&m, &test).unwrap(), 0.5);
    }

    #[test]
    fn zero_epochs_keep_initialisation() {
        let d = LabeledDataset::new(array![[0.0, 1.0], [1.0, 0.0]], vec![0, 1], 2, Split::Distilled).unwrap();
        let soft = SoftLabelSet::hard(&d.labels, 2);
        let settings = StudentSettings {
            epochs: 0,
            batch_size: 2,
            ..StudentSettings::default()
        };
        let run = train_student(&d, &soft, &settings, &LossWeights::default(), 4).unwrap();
        let mut rng = CountingRng::new(4, Stage::Student, 0);
        let init = Classifier::init(settings.kind, 2, 2, &mut rng).unwrap();
        assert_eq!(run.student.model, init);
        assert!(run.epoch_losses.is_empty());
    }

    #[test]
    fn oversized_batch_is_a_config_error() {
        let d = LabeledDataset::new(array![[0.0, 1.0]], vec![0], 2, Split::Distilled).unwrap();
        let soft = SoftLabelSet::hard(&d.labels, 2);
        let err = train_student(&d, &soft, &StudentSettings::default(), &LossWeights::default(), 0).unwrap_err();
        assert!(err.is_config());
    }
}
