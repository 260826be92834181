use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of training timesteps the DDIM grid is subsampled from.
pub const TRAIN_STEPS: usize = 1000;
const BETA_START: f64 = 1e-4;
const BETA_END: f64 = 0.02;

/// Cumulative signal fractions `ᾱ_t` for `t = 1..=steps`; `ᾱ_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// `alpha_bars[t - 1] = ᾱ_t`. Must be strictly decreasing in `(0, 1]` and
    /// end at or below `0.05`.
    pub fn new(alpha_bars: Vec<f64>) -> Result<Self> {
        if alpha_bars.is_empty() {
            return Err(Error::InvalidInput("noise schedule needs at least one step".into()));
        }
        if alpha_bars.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidInput("schedule values must lie in (0, 1]".into()));
        }
        if alpha_bars.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("schedule must be strictly decreasing".into()));
        }
        let last = *alpha_bars.last().expect("nonempty");
        if last > 0.05 {
            return Err(Error::InvalidInput(format!(
                "final signal fraction {last} exceeds 0.05"
            )));
        }
        Ok(Self { alpha_bars })
    }

    /// Linear-β DDPM schedule over [`TRAIN_STEPS`] steps, subsampled to
    /// `steps` evenly spaced DDIM timesteps.
    pub fn ddim(steps: usize) -> Result<Self> {
        if steps == 0 || steps > TRAIN_STEPS {
            return Err(Error::InvalidInput(format!(
                "DDIM steps must be in 1..={TRAIN_STEPS}, got {steps}"
            )));
        }
        let mut cumulative = Vec::with_capacity(TRAIN_STEPS);
        let mut acc = 1.0;
        for s in 0..TRAIN_STEPS {
            let beta = BETA_START + (BETA_END - BETA_START) * s as f64 / (TRAIN_STEPS - 1) as f64;
            acc *= 1.0 - beta;
            cumulative.push(acc);
        }
        let stride = TRAIN_STEPS / steps;
        let alpha_bars = (1..=steps).map(|k| cumulative[k * stride - 1]).collect();
        Self::new(alpha_bars)
    }

    pub fn steps(&self) -> usize {
        self.alpha_bars.len()
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::ddim(50).expect("50 divides the training grid")
    }
}

/// `√ᾱ · z0 + √(1 − ᾱ) · noise`.
pub fn add_noise(z0: ArrayView1<'_, f64>, alpha_bar: f64, noise: ArrayView1<'_, f64>) -> Array1<f64> {
    let signal = alpha_bar.sqrt();
    let sigma = (1.0 - alpha_bar).max(0.0).sqrt();
    &z0 * signal + &noise * sigma
}

/// Forward noising of a clean latent to step `t`.
pub fn forward_noise(
    z0: ArrayView1<'_, f64>,
    t: usize,
    schedule: &NoiseSchedule,
    noise: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidInput(format!(
            "step {t} outside 1..={}",
            schedule.steps()
        )));
    }
    Ok(add_noise(z0, schedule.alpha_bar(t), noise))
}

/// Deterministic (η = 0) DDIM update between two signal levels.
pub fn ddim_update(
    z_t: ArrayView1<'_, f64>,
    eps: ArrayView1<'_, f64>,
    alpha_bar: f64,
    alpha_bar_prev: f64,
) -> Array1<f64> {
    let z0_hat = (&z_t - &(&eps * (1.0 - alpha_bar).max(0.0).sqrt())) / alpha_bar.sqrt();
    z0_hat * alpha_bar_prev.sqrt() + &eps * (1.0 - alpha_bar_prev).max(0.0).sqrt()
}

/// One reverse step `z_t → z_{t−1}`.
pub fn reverse_step(
    z_t: ArrayView1<'_, f64>,
    t: usize,
    eps: ArrayView1<'_, f64>,
    schedule: &NoiseSchedule,
) -> Result<Array1<f64>> {
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidInput(format!(
            "step {t} outside 1..={}",
            schedule.steps()
        )));
    }
    Ok(ddim_update(z_t, eps, schedule.alpha_bar(t), schedule.alpha_bar(t - 1)))
}
