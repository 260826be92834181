//! Toy reverse-diffusion sampler with OT and diversity guidance.
//!
//! Latents of one class are produced one at a time. Each rollout starts from
//! standard normal noise, runs the deterministic DDIM update with the closed
//! form denoiser of the class mixture, and subtracts weighted guidance
//! gradients evaluated at the pre-update point.

mod denoiser;
mod guidance;
mod schedule;

pub use denoiser::{analytic_denoiser, posterior_mean, predict_noise, responsibilities};
pub use guidance::{
    diversity_gradient, diversity_guidance, ot_guidance, ot_guidance_value, EntropyWeight, OtGuidance,
};
pub use schedule::{add_noise, ddim_update, forward_noise, reverse_step, NoiseSchedule, TRAIN_STEPS};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{GaussianMixture, GmmSpec, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::rng::{CountingRng, Stage, StreamUsage};
use rand::Rng;

/// Weights of the three guidance terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceWeights {
    /// OT guidance weight.
    pub beta1: f64,
    /// Cosine diversity weight.
    pub gamma: f64,
    /// Influence hook weight.
    pub rho: f64,
    pub lambda1: EntropyWeight,
}

impl Default for GuidanceWeights {
    fn default() -> Self {
        Self {
            beta1: 1.0,
            gamma: 0.0,
            rho: 0.0,
            lambda1: EntropyWeight::default(),
        }
    }
}

impl GuidanceWeights {
    /// All guidance off.
    pub fn none() -> Self {
        Self {
            beta1: 0.0,
            gamma: 0.0,
            rho: 0.0,
            lambda1: EntropyWeight::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let lambda_ok = match self.lambda1 {
            EntropyWeight::RelativeToMeanCost(f) | EntropyWeight::Absolute(f) => f.is_finite() && f > 0.0,
        };
        if ok(self.beta1) && ok(self.gamma) && ok(self.rho) && lambda_ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid guidance weights {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub schedule: NoiseSchedule,
    /// Real points drawn per reverse step for the OT guidance.
    pub batch_size: usize,
    pub sinkhorn_iters: usize,
    /// Norm order of the guidance cost.
    pub p: f64,
    /// A latent whose sup-norm exceeds this multiple of the real data's
    /// sup-norm counts as diverged. `None` only checks finiteness.
    pub divergence_factor: Option<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::default(),
            batch_size: 64,
            sinkhorn_iters: 20,
            p: 1.0,
            divergence_factor: Some(10.0),
        }
    }
}

/// The sampler's view of one in-progress rollout.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub class: usize,
    /// Finished latents of this class, one per row.
    pub accumulated: Array2<f64>,
    pub current: Array1<f64>,
    pub step: usize,
}

/// Source of the influence gradient `∇G_I`.
pub trait InfluenceHook {
    fn gradient(&self, state: &SamplerState) -> Array1<f64>;
}

/// The default hook: no influence term.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroInfluence;

impl InfluenceHook for ZeroInfluence {
    fn gradient(&self, state: &SamplerState) -> Array1<f64> {
        Array1::zeros(state.current.len())
    }
}

/// Weighted sum `ρ∇G_I + γ∇G_D + β1∇G_W` at the state's current point.
/// Terms with zero weight are not evaluated.
pub fn guidance_gradient(
    state: &SamplerState,
    real_batch: ArrayView2<'_, f64>,
    weights: &GuidanceWeights,
    config: &SamplerConfig,
    hook: &dyn InfluenceHook,
) -> Result<Array1<f64>> {
    let mut total = Array1::<f64>::zeros(state.current.len());
    if weights.rho != 0.0 {
        total.scaled_add(weights.rho, &hook.gradient(state));
    }
    if weights.gamma != 0.0 {
        total.scaled_add(
            weights.gamma,
            &diversity_gradient(state.current.view(), state.accumulated.view()),
        );
    }
    if weights.beta1 != 0.0 {
        let g = ot_guidance(
            state.accumulated.view(),
            state.current.view(),
            real_batch,
            weights.lambda1,
            config.sinkhorn_iters,
            config.p,
        )?;
        total.scaled_add(weights.beta1, &g.gradient);
    }
    Ok(total)
}

fn draw_batch(real: ArrayView2<'_, f64>, size: usize, rng: &mut CountingRng) -> Array2<f64> {
    if real.nrows() <= size {
        return real.to_owned();
    }
    let idx = sample_indices(rng, real.nrows(), size).into_vec();
    real.select(Axis(0), &idx)
}

fn sup_norm(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Output of sampling one class.
#[derive(Debug, Clone)]
pub struct ClassSamples {
    pub latents: Array2<f64>,
    pub streams: Vec<StreamUsage>,
}

/// Samples `ipc` latents for `class` with the zero influence hook.
#[allow(clippy::too_many_arguments)]
pub fn sample_class(
    class: usize,
    ipc: usize,
    real: ArrayView2<'_, f64>,
    mixture: &GaussianMixture,
    weights: &GuidanceWeights,
    config: &SamplerConfig,
    seed: u64,
) -> Result<ClassSamples> {
    sample_class_with_hook(class, ipc, real, mixture, weights, config, seed, &ZeroInfluence)
}

/// Samples `ipc` latents for `class`, drawing initial noise and per-step real
/// batches from the class's own streams.
#[allow(clippy::too_many_arguments)]
pub fn sample_class_with_hook(
    class: usize,
    ipc: usize,
    real: ArrayView2<'_, f64>,
    mixture: &GaussianMixture,
    weights: &GuidanceWeights,
    config: &SamplerConfig,
    seed: u64,
    hook: &dyn InfluenceHook,
) -> Result<ClassSamples> {
    weights.validate()?;
    if real.nrows() == 0 {
        return Err(Error::InvalidInput(format!("class {class} has no real latents")));
    }
    if real.ncols() != mixture.dim() {
        return Err(Error::SizeMismatch(format!(
            "real latents have {} dims, mixture {}",
            real.ncols(),
            mixture.dim()
        )));
    }
    if config.batch_size == 0 || config.sinkhorn_iters == 0 {
        return Err(Error::Config("sampler batch size and Sinkhorn iterations must be positive".into()));
    }
    let dim = mixture.dim();
    let bound = config
        .divergence_factor
        .map(|f| f * real.iter().fold(1.0f64, |m, x| m.max(x.abs())));
    let schedule = &config.schedule;
    let mut noise_rng = CountingRng::new(seed, Stage::SamplerNoise, class as u64);
    let mut batch_rng = CountingRng::new(seed, Stage::SamplerBatch, class as u64);
    let mut state = SamplerState {
        class,
        accumulated: Array2::zeros((0, dim)),
        current: Array1::zeros(dim),
        step: schedule.steps(),
    };
    let guided = weights.beta1 != 0.0 || weights.gamma != 0.0 || weights.rho != 0.0;
    for _ in 0..ipc {
        state.current = (0..dim).map(|_| noise_rng.sample::<f64, _>(StandardNormal)).collect();
        for t in (1..=schedule.steps()).rev() {
            state.step = t;
            let abar = schedule.alpha_bar(t);
            let eps = predict_noise(mixture, state.current.view(), abar);
            let mut next = ddim_update(state.current.view(), eps.view(), abar, schedule.alpha_bar(t - 1));
            if guided {
                let batch = if weights.beta1 != 0.0 {
                    draw_batch(real, config.batch_size, &mut batch_rng)
                } else {
                    Array2::zeros((0, dim))
                };
                next -= &guidance_gradient(&state, batch.view(), weights, config, hook)?;
            }
            let diverged = next.iter().any(|v| !v.is_finite())
                || bound.is_some_and(|b| sup_norm(next.view()) > b);
            if diverged {
                return Err(Error::SamplingDiverged { class, step: t });
            }
            state.current = next;
        }
        state.accumulated.push_row(state.current.view()).expect("row length matches");
    }
    Ok(ClassSamples {
        latents: state.accumulated,
        streams: vec![
            StreamUsage::of(Stage::SamplerNoise, class as u64, &noise_rng),
            StreamUsage::of(Stage::SamplerBatch, class as u64, &batch_rng),
        ],
    })
}

/// A distilled set plus the random streams that produced it.
#[derive(Debug, Clone)]
pub struct DistilledSet {
    pub data: LabeledDataset,
    pub streams: Vec<StreamUsage>,
}

/// Runs [`sample_class`] for every class of `spec` against its train points.
pub fn sample_all_classes(
    spec: &GmmSpec,
    train: &LabeledDataset,
    ipc: usize,
    weights: &GuidanceWeights,
    config: &SamplerConfig,
    seed: u64,
) -> Result<DistilledSet> {
    if ipc == 0 {
        return Err(Error::Config("IPC must be at least 1".into()));
    }
    if train.num_classes != spec.num_classes {
        return Err(Error::SizeMismatch(format!(
            "train set has {} classes, spec {}",
            train.num_classes, spec.num_classes
        )));
    }
    let mut points = Array2::zeros((0, spec.dim));
    let mut labels = Vec::with_capacity(ipc * spec.num_classes);
    let mut streams = Vec::new();
    for c in 0..spec.num_classes {
        let real = train.class_points(c);
        let out = sample_class(c, ipc, real.view(), &spec.class_mixture(c), weights, config, seed)?;
        for row in out.latents.axis_iter(Axis(0)) {
            points.push_row(row).expect("row length matches");
            labels.push(c);
        }
        streams.extend(out.streams);
    }
    Ok(DistilledSet {
        data: LabeledDataset::new(points, labels, spec.num_classes, Split::Distilled)?,
        streams,
    })
}
