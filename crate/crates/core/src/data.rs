//! Synthetic class-conditional Gaussian mixtures standing in for a real
//! image dataset, plus the identity encoder/decoder pair.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{CountingRng, Stage};

/// Which part of the pipeline a set of labelled points belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Distilled,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Distilled => "distilled",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "distilled" => Ok(Split::Distilled),
            other => Err(Error::format("split tag", other)),
        }
    }
}

/// Points with class labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub points: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(points: Array2<f64>, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if points.nrows() != labels.len() {
            return Err(Error::SizeMismatch(format!(
                "{} points but {} labels",
                points.nrows(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|l| **l >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            points,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect()
    }

    pub fn class_points(&self, class: usize) -> Array2<f64> {
        self.points.select(Axis(0), &self.class_indices(class))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn one_hot(&self) -> Array2<f64> {
        one_hot(&self.labels, self.num_classes)
    }
}

pub fn one_hot(labels: &[usize], num_classes: usize) -> Array2<f64> {
    let mut out = Array2::zeros((labels.len(), num_classes));
    for (i, &l) in labels.iter().enumerate() {
        out[[i, l]] = 1.0;
    }
    out
}

/// An isotropic Gaussian mixture `Σₖ wₖ N(μₖ, σ² I)`; `σ = 0` is allowed and
/// degenerates to point masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub means: Array2<f64>,
    pub weights: Array1<f64>,
    pub std: f64,
}

impl GaussianMixture {
    pub fn new(means: Array2<f64>, weights: Array1<f64>, std: f64) -> Result<Self> {
        if means.nrows() == 0 || means.nrows() != weights.len() {
            return Err(Error::InvalidSpec(format!(
                "{} mode means but {} weights",
                means.nrows(),
                weights.len()
            )));
        }
        check_weights(weights.view())?;
        if !(std.is_finite() && std >= 0.0) {
            return Err(Error::InvalidSpec(format!("mode std must be >= 0, got {std}")));
        }
        Ok(Self { means, weights, std })
    }

    pub fn single(mean: Array1<f64>, std: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean.into_shape_with_order((1, d)).expect("row vector"), Array1::ones(1), std)
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn mean(&self) -> Array1<f64> {
        self.weights.dot(&self.means)
    }

    /// Trace of the mixture covariance: `d σ² + Σₖ wₖ ‖μₖ − μ̄‖²`.
    pub fn covariance_trace(&self) -> f64 {
        let mu = self.mean();
        let spread: f64 = self
            .means
            .axis_iter(Axis(0))
            .zip(self.weights.iter())
            .map(|(m, w)| w * (&m - &mu).mapv(|x| x * x).sum())
            .sum();
        self.dim() as f64 * self.std * self.std + spread
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let mode = if self.weights.len() == 1 {
            0
        } else {
            WeightedIndex::new(self.weights.iter().copied())
                .expect("validated weights")
                .sample(rng)
        };
        let mut x = self.means.row(mode).to_owned();
        for v in x.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += self.std * z;
        }
        x
    }
}

fn check_weights(w: ArrayView1<'_, f64>) -> Result<()> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (w.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec(format!("mode weights {w} are not a probability vector")));
    }
    Ok(())
}

/// Class-conditional mixture specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub num_classes: usize,
    pub modes_per_class: usize,
    pub dim: usize,
    /// One `modes_per_class × dim` matrix per class.
    pub mode_means: Vec<Array2<f64>>,
    pub mode_weights: Vec<Array1<f64>>,
    pub mode_std: f64,
    pub samples_per_class: usize,
}

/// Minimum distance between two modes of one class, in units of `mode_std`.
pub const MODE_SEPARATION: f64 = 4.0;

impl GmmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.modes_per_class < 1 {
            return bad("need at least one mode per class".into());
        }
        if self.dim < 2 {
            return bad(format!("dimension must be >= 2, got {}", self.dim));
        }
        if !(self.mode_std.is_finite() && self.mode_std > 0.0) {
            return bad(format!("mode std must be positive, got {}", self.mode_std));
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive".into());
        }
        if self.mode_means.len() != self.num_classes || self.mode_weights.len() != self.num_classes {
            return bad("mode means and weights must be given for every class".into());
        }
        for (c, (means, weights)) in self.mode_means.iter().zip(&self.mode_weights).enumerate() {
            if means.dim() != (self.modes_per_class, self.dim) {
                return bad(format!("class {c} mode means have shape {:?}", means.dim()));
            }
            if weights.len() != self.modes_per_class {
                return bad(format!("class {c} has {} mode weights", weights.len()));
            }
            check_weights(weights.view())?;
            if means.iter().any(|v| !v.is_finite()) {
                return bad(format!("class {c} has a non-finite mode mean"));
            }
            for i in 0..self.modes_per_class {
                for j in i + 1..self.modes_per_class {
                    let dist = crate::ot::lp_distance(means.row(i), means.row(j), 2.0);
                    if dist < MODE_SEPARATION * self.mode_std {
                        return bad(format!(
                            "class {c} modes {i} and {j} are {dist:.3} apart, below {MODE_SEPARATION}·std"
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn class_mixture(&self, class: usize) -> GaussianMixture {
        GaussianMixture {
            means: self.mode_means[class].clone(),
            weights: self.mode_weights[class].clone(),
            std: self.mode_std,
        }
    }

    pub fn test_per_class(&self) -> usize {
        (self.samples_per_class / 4).max(1)
    }

    /// The default benchmark: 10 classes, 3 modes each, 8 dimensions.
    pub fn nette_toy(grid_seed: u64) -> Self {
        GridSpec::default().build(grid_seed).expect("default grid spec is valid")
    }
}

/// Parameters for drawing mode means from a seeded integer lattice.
///
/// Each coordinate of every mode mean is `spacing · k` with `k` drawn
/// uniformly from `-levels..=levels`; draws are rejected until all means are
/// distinct lattice points and within-class modes are separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub num_classes: usize,
    pub modes_per_class: usize,
    pub dim: usize,
    pub mode_std: f64,
    pub samples_per_class: usize,
    pub spacing: f64,
    pub levels: i64,
    /// Per-class mode weights; uniform when empty.
    pub mode_weights: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            num_classes: 10,
            modes_per_class: 3,
            dim: 8,
            mode_std: 0.7,
            samples_per_class: 500,
            spacing: 4.0,
            levels: 1,
            mode_weights: Vec::new(),
        }
    }
}

impl GridSpec {
    pub fn build(&self, grid_seed: u64) -> Result<GmmSpec> {
        if self.levels < 1 || !(self.spacing > 0.0) {
            return Err(Error::InvalidSpec("grid needs levels >= 1 and positive spacing".into()));
        }
        let weights = if self.mode_weights.is_empty() {
            Array1::from_elem(self.modes_per_class, 1.0 / self.modes_per_class as f64)
        } else {
            Array1::from_vec(self.mode_weights.clone())
        };
        let mut rng = CountingRng::new(grid_seed, Stage::Data, u64::MAX);
        let mut taken: Vec<Vec<i64>> = Vec::new();
        let mut mode_means = Vec::with_capacity(self.num_classes);
        let min_sep = MODE_SEPARATION * self.mode_std;
        for _ in 0..self.num_classes {
            let mut class_modes: Vec<Vec<i64>> = Vec::new();
            let mut attempts = 0;
            while class_modes.len() < self.modes_per_class {
                attempts += 1;
                if attempts > 100_000 {
                    return Err(Error::InvalidSpec(
                        "could not place separated modes on the grid; widen spacing or levels".into(),
                    ));
                }
                let cand: Vec<i64> = (0..self.dim)
                    .map(|_| rng.random_range(-self.levels..=self.levels))
                    .collect();
                if taken.contains(&cand) {
                    continue;
                }
                let separated = class_modes.iter().all(|m| {
                    let sq: i64 = m.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum();
                    self.spacing * (sq as f64).sqrt() >= min_sep
                });
                if separated {
                    taken.push(cand.clone());
                    class_modes.push(cand);
                }
            }
            let flat: Vec<f64> = class_modes
                .iter()
                .flatten()
                .map(|&k| k as f64 * self.spacing)
                .collect();
            mode_means.push(Array2::from_shape_vec((self.modes_per_class, self.dim), flat).expect("shape"));
        }
        let spec = GmmSpec {
            num_classes: self.num_classes,
            modes_per_class: self.modes_per_class,
            dim: self.dim,
            mode_means,
            mode_weights: vec![weights; self.num_classes],
            mode_std: self.mode_std,
            samples_per_class: self.samples_per_class,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn draw_split(spec: &GmmSpec, per_class: usize, rng: &mut CountingRng, split: Split) -> LabeledDataset {
    let mut points = Array2::zeros((spec.num_classes * per_class, spec.dim));
    let mut labels = Vec::with_capacity(spec.num_classes * per_class);
    for c in 0..spec.num_classes {
        let mixture = spec.class_mixture(c);
        for k in 0..per_class {
            points.row_mut(c * per_class + k).assign(&mixture.sample(rng));
            labels.push(c);
        }
    }
    LabeledDataset {
        points,
        labels,
        num_classes: spec.num_classes,
        split,
    }
}

/// Draws train and test splits i.i.d. from the spec's mixtures.
///
/// Train has exactly `samples_per_class` points per class, test a quarter of
/// that. Output is a pure function of `(spec, seed)`.
pub fn make_gmm_dataset(spec: &GmmSpec, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let mut train_rng = CountingRng::new(seed, Stage::Data, 0);
    let mut test_rng = CountingRng::new(seed, Stage::Data, 1);
    let train = draw_split(spec, spec.samples_per_class, &mut train_rng, Split::Train);
    let test = draw_split(spec, spec.test_per_class(), &mut test_rng, Split::Test);
    Ok((train, test))
}

/// Maps data points to latents. The identity at this scale.
pub fn encode(points: ArrayView2<'_, f64>) -> Array2<f64> {
    points.to_owned()
}

/// Maps latents back to data points. The identity at this scale.
pub fn decode(latents: ArrayView2<'_, f64>) -> Array2<f64> {
    latents.to_owned()
}
