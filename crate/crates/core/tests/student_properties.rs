mod common;

use common::{points, rng};
use ndarray::{Array1, Array2, Axis};
use otdd_core::data::{make_gmm_dataset, one_hot, GmmSpec, LabeledDataset, Split};
use otdd_core::model::{softmax_rows, Classifier, ModelKind};
use otdd_core::relabel::SoftLabelSet;
use otdd_core::rng::{CountingRng, Stage};
use otdd_core::student::*;
use proptest::prelude::*;
use rand::Rng;

struct Instance {
    x: Array2<f64>,
    y: Array2<f64>,
    t: Array2<f64>,
    model: Classifier,
}

fn instance(seed: u64, b: usize, d: usize, c: usize, mlp: bool) -> Instance {
    let mut r = rng(seed);
    let x = points(&mut r, b, d);
    let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..c)).collect();
    let t = softmax_rows((points(&mut r, b, c) * 2.0).view());
    let kind = if mlp { ModelKind::Mlp { hidden: 5 } } else { ModelKind::LinearSoftmax };
    let model = Classifier::init(kind, d, c, &mut CountingRng::new(seed, Stage::Student, 0)).unwrap();
    Instance {
        x,
        y: one_hot(&labels, c),
        t,
        model,
    }
}

fn batch(i: &Instance) -> Batch<'_> {
    Batch {
        x: i.x.view(),
        y: i.y.view(),
        t: i.t.view(),
    }
}

/// `‖g − fd‖₂ / ‖fd‖₂` against central differences of `f`.
fn fd_rel_error(params: &Array1<f64>, grad: &Array1<f64>, f: impl Fn(&Array1<f64>) -> f64) -> f64 {
    let h = 1e-5;
    let fd: Array1<f64> = (0..params.len())
        .map(|k| {
            let mut up = params.clone();
            up[k] += h;
            let mut down = params.clone();
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect();
    let diff = grad - &fd;
    diff.dot(&diff).sqrt() / fd.dot(&fd).sqrt().max(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_components_are_nonnegative(seed in any::<u64>(), b in 1usize..8, c in 2usize..5, mlp in any::<bool>()) {
        let inst = instance(seed, b, 3, c, mlp);
        let (loss, _) = total_loss_and_grads(&batch(&inst), &inst.model, &LossWeights::default()).unwrap();
        prop_assert!(loss.ce >= 0.0 && loss.mse >= 0.0 && loss.sd >= 0.0);
        let w = LossWeights::default();
        prop_assert!((loss.total - (w.kappa1 * loss.ce + w.kappa2 * loss.mse + w.beta2 * loss.sd)).abs() <= 1e-12);
    }

    #[test]
    fn batch_ot_loss_ignores_prediction_order(seed in any::<u64>(), b in 1usize..8, c in 2usize..5, shift in 1usize..8) {
        let mut r = rng(seed);
        let t = softmax_rows(points(&mut r, b, c).view());
        let s = points(&mut r, b, c) * 3.0;
        let order: Vec<usize> = (0..b).map(|i| (i + shift) % b).collect();
        let (l1, _) = batch_ot_loss(t.view(), s.view(), 0.1, 20, 1.0).unwrap();
        let (l2, _) = batch_ot_loss(t.view(), s.select(Axis(0), &order).view(), 0.1, 20, 1.0).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-10, "{l1} vs {l2}");
    }

    #[test]
    fn fixed_plan_gradient_matches_differences(seed in any::<u64>(), b in 2usize..7, c in 2usize..5, mlp in any::<bool>(), logits in any::<bool>()) {
        let inst = instance(seed, b, 3, c, mlp);
        let weights = LossWeights {
            beta2: 0.5,
            kappa2: 0.3,
            mse_operand: if logits { MseOperand::Logits } else { MseOperand::Probabilities },
            ..LossWeights::default()
        };
        let (_, grad, plan) = total_loss_grads_and_plan(&batch(&inst), &inst.model, &weights).unwrap();
        let plan = plan.unwrap();
        let err = fd_rel_error(&inst.model.params, &grad, |p| {
            let m = Classifier::from_params(inst.model.kind, 3, c, p.clone()).unwrap();
            fixed_plan_loss(&batch(&inst), &m, &weights, &plan).unwrap().total
        });
        prop_assert!(err <= 1e-3, "relative error {err}");
    }

    #[test]
    fn plain_cross_entropy_gradient(seed in any::<u64>(), b in 1usize..7, c in 2usize..5, mlp in any::<bool>()) {
        let inst = instance(seed, b, 3, c, mlp);
        let weights = LossWeights { kappa2: 0.0, beta2: 0.0, ..LossWeights::default() };
        let (_, grad) = total_loss_and_grads(&batch(&inst), &inst.model, &weights).unwrap();
        let err = fd_rel_error(&inst.model.params, &grad, |p| {
            let m = Classifier::from_params(inst.model.kind, 3, c, p.clone()).unwrap();
            total_loss_and_grads(&batch(&inst), &m, &weights).unwrap().0.ce
        });
        prop_assert!(err <= 1e-4, "relative error {err}");
    }
}

fn small_distilled() -> (LabeledDataset, SoftLabelSet) {
    let spec = GmmSpec::nette_toy(0);
    let (train, _) = make_gmm_dataset(&spec, 3).unwrap();
    let idx: Vec<usize> = (0..spec.num_classes).flat_map(|c| (0..10).map(move |k| c * spec.samples_per_class + k)).collect();
    let points = train.points.select(Axis(0), &idx);
    let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
    let soft = SoftLabelSet::from_rows(one_hot(&labels, spec.num_classes) * 0.9 + 0.01, vec![]).unwrap();
    (LabeledDataset::new(points, labels, spec.num_classes, Split::Distilled).unwrap(), soft)
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let (data, soft) = small_distilled();
    let settings = StudentSettings::default();
    let a = train_student(&data, &soft, &settings, &LossWeights::default(), 11).unwrap();
    let b = train_student(&data, &soft, &settings, &LossWeights::default(), 11).unwrap();
    assert_eq!(a.student, b.student);
    assert_eq!(a.stream, b.stream);
    assert!(a.epoch_losses.last().unwrap() <= a.epoch_losses.first().unwrap());
    assert!(a.student.model.is_finite());
}

#[test]
fn ema_copy_trails_the_raw_parameters() {
    let (data, soft) = small_distilled();
    let settings = StudentSettings {
        ema: Some(0.99),
        epochs: 20,
        ..StudentSettings::default()
    };
    let run = train_student(&data, &soft, &settings, &LossWeights::default(), 2).unwrap();
    let ema = run.student.ema.unwrap();
    assert_ne!(ema.params, run.student.model.params);
    assert!(ema.is_finite());
}
