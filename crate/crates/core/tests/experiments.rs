//! Desk-scale statistical checks on the default toy benchmark.

use ndarray::{array, Array2};
use otdd_core::data::{make_gmm_dataset, GmmSpec, LabeledDataset, Split};
use otdd_core::harness::*;
use otdd_core::model::ModelKind;
use otdd_core::relabel::{train_teacher, train_teacher_with, SoftLabelSet, TeacherTraining};
use otdd_core::student::{evaluate, train_student, LossWeights, StudentSettings};

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[test]
fn linear_teacher_separates_two_blobs_within_200_epochs() {
    let spec = GmmSpec {
        num_classes: 2,
        modes_per_class: 1,
        dim: 2,
        mode_means: vec![array![[-5.0, -5.0]], array![[5.0, 5.0]]],
        mode_weights: vec![array![1.0]; 2],
        mode_std: 1.0,
        samples_per_class: 100,
    };
    let (train, _) = make_gmm_dataset(&spec, 7).unwrap();
    let teacher = train_teacher(&train, ModelKind::LinearSoftmax, 1, 200, 0.01).unwrap();
    assert_eq!(evaluate(&teacher.model, &train).unwrap(), 1.0);
}

#[test]
fn default_pool_teachers_fit_the_toy_benchmark() {
    let (train, _) = make_gmm_dataset(&GmmSpec::nette_toy(0), 0).unwrap();
    for kind in [ModelKind::LinearSoftmax, ModelKind::Mlp { hidden: 8 }, ModelKind::Mlp { hidden: 16 }] {
        let t = train_teacher_with(&train, kind, 3, &TeacherTraining::default(), kind.to_string()).unwrap();
        let acc = evaluate(&t.model, &train).unwrap();
        assert!(acc >= 0.90, "{kind}: train accuracy {acc}");
    }
}

#[test]
fn hidden_layer_beats_linear_on_multimodal_classes() {
    let spec = GmmSpec::nette_toy(0);
    let (mut linear, mut mlp) = (0.0, 0.0);
    for seed in 0..5 {
        let (train, test) = make_gmm_dataset(&spec, seed).unwrap();
        let settings = TeacherTraining::default();
        let a = train_teacher_with(&train, ModelKind::LinearSoftmax, seed, &settings, "l".into()).unwrap();
        let b = train_teacher_with(&train, ModelKind::Mlp { hidden: 16 }, seed, &settings, "m".into()).unwrap();
        linear += evaluate(&a.model, &test).unwrap();
        mlp += evaluate(&b.model, &test).unwrap();
    }
    assert!(mlp > linear, "mlp {} vs linear {}", mlp / 5.0, linear / 5.0);
}

#[test]
fn full_data_student_is_accurate() {
    let (train, test) = make_gmm_dataset(&GmmSpec::nette_toy(0), 1).unwrap();
    let soft = SoftLabelSet::hard(&train.labels, train.num_classes);
    let settings = StudentSettings {
        epochs: 10,
        batch_size: 50,
        ..StudentSettings::default()
    };
    let run = train_student(&train, &soft, &settings, &LossWeights::default(), 1).unwrap();
    let acc = evaluate(&run.student.model, &test).unwrap();
    assert!(acc >= 0.95, "full-data accuracy {acc}");
}

#[test]
fn batch_ot_loss_rarely_hurts_the_student() {
    let mut config = ExperimentConfig::default();
    config.write_artifacts = false;
    config.threads = threads();
    let full = AblationFlags::FULL;
    let arms = run_arms(&config, &[full, AblationFlags { otm: false, ..full }]).unwrap();
    let not_worse = arms[0].iter().zip(&arms[1]).filter(|(a, b)| a.accuracy >= b.accuracy).count();
    assert!(not_worse * 10 >= 7 * config.seeds.len(), "{not_worse} of {}", config.seeds.len());
}

#[test]
fn zero_epoch_student_on_a_tiny_set_is_its_initialisation() {
    let data = LabeledDataset::new(Array2::zeros((4, 2)), vec![0, 1, 0, 1], 2, Split::Distilled).unwrap();
    let soft = SoftLabelSet::hard(&data.labels, 2);
    let settings = StudentSettings {
        epochs: 0,
        batch_size: 2,
        ..StudentSettings::default()
    };
    let a = train_student(&data, &soft, &settings, &LossWeights::default(), 0).unwrap();
    let b = train_student(&data, &soft, &settings, &LossWeights::default(), 0).unwrap();
    assert_eq!(a.student.model, b.student.model);
    assert!(a.epoch_losses.is_empty());
}
