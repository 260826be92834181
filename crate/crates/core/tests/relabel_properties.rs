mod common;

use common::{points, rng};
use ndarray::{Array1, Array2, Axis};
use otdd_core::data::{one_hot, LabeledDataset, Split};
use otdd_core::model::{softmax_rows, Classifier, ModelKind};
use otdd_core::relabel::*;
use otdd_core::rng::{CountingRng, Stage};
use proptest::prelude::*;
use rand::Rng;

fn random_teacher(id: &str, seed: u64, d: usize, c: usize) -> Teacher {
    let mut r = CountingRng::new(seed, Stage::Teachers, 0);
    let kind = if seed % 2 == 0 { ModelKind::LinearSoftmax } else { ModelKind::Mlp { hidden: 4 } };
    let mut model = Classifier::init(kind, d, c, &mut r).unwrap();
    model.params.mapv_inplace(|v| 3.0 * v);
    Teacher {
        id: id.into(),
        train_seed: seed,
        model,
    }
}

/// Real points and labels with every class present, plus a distilled set.
fn problem(seed: u64, classes: usize, per_class: usize, ipc: usize, d: usize) -> (LabeledDataset, LabeledDataset) {
    let mut r = rng(seed);
    let mut real = points(&mut r, classes * per_class, d);
    let labels: Vec<usize> = (0..classes * per_class).map(|i| i / per_class).collect();
    for (mut row, &c) in real.axis_iter_mut(Axis(0)).zip(&labels) {
        row[0] += 3.0 * c as f64;
    }
    let mut distilled = points(&mut r, classes * ipc, d);
    let dl: Vec<usize> = (0..classes * ipc).map(|i| i / ipc).collect();
    for (mut row, &c) in distilled.axis_iter_mut(Axis(0)).zip(&dl) {
        row[0] += 3.0 * c as f64 + r.random_range(-0.5..0.5);
    }
    (
        LabeledDataset::new(real, labels, classes, Split::Train).unwrap(),
        LabeledDataset::new(distilled, dl, classes, Split::Distilled).unwrap(),
    )
}

fn settings() -> AlphaSettings {
    AlphaSettings::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn soft_labels_are_row_stochastic(seed in any::<u64>(), k in 1usize..4, c in 2usize..6, scale in 0.1f64..50.0) {
        let d = 3;
        let teachers: Vec<Teacher> = (0..k).map(|i| random_teacher(&format!("t{i}"), seed.wrapping_add(i as u64), d, c)).collect();
        let x = points(&mut rng(seed), 20, d) * scale;
        let soft = soft_label(x.view(), &teachers).unwrap();
        for row in soft.labels.axis_iter(Axis(0)) {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|v| *v >= 0.0));
        }
        prop_assert_eq!(soft.source_teachers.len(), k);
    }

    #[test]
    fn alpha_ignores_class_relabeling(seed in any::<u64>(), shift in 1usize..4) {
        let classes = 4;
        let (real, distilled) = problem(seed, classes, 12, 3, 2);
        let logits = points(&mut rng(seed ^ 1), distilled.len(), classes) * 2.0;
        let soft = SoftLabelSet::from_rows(softmax_rows(logits.view()), vec![]).unwrap();
        let base = contraction_alpha(&real, &distilled, &soft, settings(), HardReference::GenerationLabels).unwrap();

        let perm = |c: usize| (c + shift) % classes;
        let real_p = LabeledDataset::new(real.points.clone(), real.labels.iter().map(|&c| perm(c)).collect(), classes, Split::Train).unwrap();
        let dist_p = LabeledDataset::new(distilled.points.clone(), distilled.labels.iter().map(|&c| perm(c)).collect(), classes, Split::Distilled).unwrap();
        let mut cols = Array2::zeros(soft.labels.raw_dim());
        for c in 0..classes {
            cols.column_mut(perm(c)).assign(&soft.labels.column(c));
        }
        let soft_p = SoftLabelSet::from_rows(cols, vec![]).unwrap();
        let moved = contraction_alpha(&real_p, &dist_p, &soft_p, settings(), HardReference::GenerationLabels).unwrap();
        prop_assert!((base.alpha - moved.alpha).abs() <= 1e-10, "{} vs {}", base.alpha, moved.alpha);
    }

    #[test]
    fn one_hot_soft_labels_are_their_own_projection(seed in any::<u64>()) {
        let (real, distilled) = problem(seed, 3, 10, 4, 2);
        let mut r = rng(seed);
        let picks: Vec<usize> = (0..distilled.len()).map(|_| r.random_range(0..3)).collect();
        let soft = SoftLabelSet::from_rows(one_hot(&picks, 3), vec![]).unwrap();
        let report = contraction_alpha(&real, &distilled, &soft, settings(), HardReference::ArgmaxProjection).unwrap();
        prop_assert_eq!(report.w_soft, report.w_hard);
        prop_assert_eq!(report.alpha, 1.0);
    }

    #[test]
    fn empty_classes_are_skipped_on_both_sides(seed in any::<u64>()) {
        let (real, distilled) = problem(seed, 3, 10, 4, 2);
        // Nothing is labelled class 2 on the distilled side.
        let picks: Vec<usize> = (0..distilled.len()).map(|i| i % 2).collect();
        let soft = SoftLabelSet::from_rows(one_hot(&picks, 3), vec![]).unwrap();
        let report = contraction_alpha(&real, &distilled, &soft, settings(), HardReference::ArgmaxProjection).unwrap();
        prop_assert!(report.per_class[2].soft.is_none() && report.per_class[2].hard.is_none());
        let valid: Vec<f64> = report.per_class.iter().filter_map(|c| c.soft).collect();
        prop_assert_eq!(valid.len(), 2);
        prop_assert!((report.w_soft - valid.iter().sum::<f64>() / 2.0).abs() <= 1e-15);
    }
}

#[test]
fn uniform_teacher_is_never_chosen_alone_over_a_better_one() {
    let (real, distilled) = problem(5, 3, 20, 4, 2);
    // Logit 3c·x₀ − 4.5c² peaks at the class whose centre x₀ ≈ 3c is nearest.
    let mut p = Array1::zeros(Classifier::param_count(ModelKind::LinearSoftmax, 2, 3));
    for c in 0..3 {
        p[c] = 3.0 * c as f64;
        p[6 + c] = -4.5 * (c as f64).powi(2);
    }
    let good = Teacher {
        id: "good".into(),
        train_seed: 0,
        model: Classifier::from_params(ModelKind::LinearSoftmax, 2, 3, p).unwrap(),
    };
    let uniform = Teacher::uniform("uniform", 2, 3).unwrap();
    let pool = [good, uniform];
    let sel = select_teachers(4, &pool, &real, &distilled, settings(), HardReference::GenerationLabels).unwrap();
    let alone = |id: &str| sel.evaluated.iter().find(|(ids, _)| ids == &vec![id.to_string()]).unwrap().1;
    assert!(alone("good") < alone("uniform"));
    assert_ne!(sel.teachers, vec!["uniform".to_string()]);
}
