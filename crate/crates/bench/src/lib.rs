//! Fixtures shared by the criterion benches.

use ndarray::Array2;
use otdd_core::data::{make_gmm_dataset, GmmSpec, LabeledDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n × d` points uniform in `[-1, 1)`.
pub fn uniform_points(seed: u64, n: usize, d: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
}

/// The default toy benchmark's train split for `seed`.
pub fn toy_train(seed: u64) -> (GmmSpec, LabeledDataset) {
    let spec = GmmSpec::nette_toy(0);
    let (train, _) = make_gmm_dataset(&spec, seed).expect("default spec is valid");
    (spec, train)
}
