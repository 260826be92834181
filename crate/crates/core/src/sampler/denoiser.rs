//! Closed-form noise prediction for a known Gaussian mixture.
//!
//! Under `z_t = √ᾱ z0 + √(1−ᾱ) ε` each mode `N(μₖ, σ²I)` yields
//! `z_t ~ N(√ᾱ μₖ, s² I)` with `s² = ᾱσ² + 1 − ᾱ`, and a Gaussian posterior
//! with mean `μₖ + (√ᾱ σ² / s²)(z_t − √ᾱ μₖ)`. The mixture posterior mean is
//! the responsibility-weighted average of those.

use ndarray::{Array1, ArrayView1, Axis};

use super::schedule::NoiseSchedule;
use crate::data::{GaussianMixture, GmmSpec};
use crate::error::{Error, Result};

/// Mode responsibilities `p(k | z_t)` under the noised mixture.
pub fn responsibilities(mixture: &GaussianMixture, z_t: ArrayView1<'_, f64>, alpha_bar: f64) -> Array1<f64> {
    let signal = alpha_bar.sqrt();
    let var = alpha_bar * mixture.std * mixture.std + (1.0 - alpha_bar);
    let logits: Array1<f64> = mixture
        .means
        .axis_iter(Axis(0))
        .zip(mixture.weights.iter())
        .map(|(mu, &w)| {
            if w == 0.0 {
                f64::NEG_INFINITY
            } else {
                let sq: f64 = z_t
                    .iter()
                    .zip(mu.iter())
                    .map(|(z, m)| (z - signal * m).powi(2))
                    .sum();
                w.ln() - sq / (2.0 * var)
            }
        })
        .collect();
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut r = logits.mapv(|l| (l - max).exp());
    let total = r.sum();
    r /= total;
    r
}

/// `E[z0 | z_t]` for a mixture prior.
pub fn posterior_mean(mixture: &GaussianMixture, z_t: ArrayView1<'_, f64>, alpha_bar: f64) -> Array1<f64> {
    let signal = alpha_bar.sqrt();
    let var = alpha_bar * mixture.std * mixture.std + (1.0 - alpha_bar);
    let gain = if var > 0.0 {
        signal * mixture.std * mixture.std / var
    } else {
        // ᾱ = 1 and σ = 0: z_t is the clean point.
        0.0
    };
    let r = responsibilities(mixture, z_t, alpha_bar);
    let mut mean = Array1::<f64>::zeros(z_t.len());
    for (mu, &rk) in mixture.means.axis_iter(Axis(0)).zip(r.iter()) {
        if rk == 0.0 {
            continue;
        }
        let mode_mean = &mu + &((&z_t - &(&mu * signal)) * gain);
        mean.scaled_add(rk, &mode_mean);
    }
    mean
}

/// `ε̂ = (z_t − √ᾱ E[z0|z_t]) / √(1−ᾱ)`; zero when `ᾱ = 1`.
pub fn predict_noise(mixture: &GaussianMixture, z_t: ArrayView1<'_, f64>, alpha_bar: f64) -> Array1<f64> {
    let sigma = (1.0 - alpha_bar).max(0.0).sqrt();
    if sigma == 0.0 {
        return Array1::zeros(z_t.len());
    }
    (&z_t - &(posterior_mean(mixture, z_t, alpha_bar) * alpha_bar.sqrt())) / sigma
}

/// Noise prediction for class `class` of `spec` at step `t`.
pub fn analytic_denoiser(
    z_t: ArrayView1<'_, f64>,
    t: usize,
    class: usize,
    spec: &GmmSpec,
    schedule: &NoiseSchedule,
) -> Result<Array1<f64>> {
    if class >= spec.num_classes {
        return Err(Error::InvalidInput(format!(
            "class {class} out of range for {} classes",
            spec.num_classes
        )));
    }
    if t == 0 || t > schedule.steps() {
        return Err(Error::InvalidInput(format!("step {t} outside 1..={}", schedule.steps())));
    }
    if z_t.len() != spec.dim {
        return Err(Error::SizeMismatch(format!("latent has {} dims, spec {}", z_t.len(), spec.dim)));
    }
    Ok(predict_noise(&spec.class_mixture(class), z_t, schedule.alpha_bar(t)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn degenerate_mixture_predicts_exact_noise() {
        let mu = array![1.0, -2.0];
        let m = GaussianMixture::single(mu.clone(), 0.0).unwrap();
        let z = array![0.3, 0.9];
        let abar: f64 = 0.4;
        assert_eq!(posterior_mean(&m, z.view(), abar), mu);
        let eps = predict_noise(&m, z.view(), abar);
        let expected = (&z - &(&mu * abar.sqrt())) / (1.0 - abar).sqrt();
        for (a, b) in eps.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn equidistant_point_averages_modes() {
        let means = array![[-3.0, 0.0], [3.0, 0.0]];
        let m = GaussianMixture::new(means, array![0.5, 0.5], 0.8).unwrap();
        let abar: f64 = 0.6;
        let z = array![0.0, 1.7];
        let post = posterior_mean(&m, z.view(), abar);
        let single = |mu: ndarray::Array1<f64>| posterior_mean(&GaussianMixture::single(mu, 0.8).unwrap(), z.view(), abar);
        let mid = (single(array![-3.0, 0.0]) + single(array![3.0, 0.0])) / 2.0;
        for (a, b) in post.iter().zip(mid.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_gaussian_posterior_is_conjugate() {
        let m = GaussianMixture::single(array![2.0, 0.0], 1.5).unwrap();
        let abar: f64 = 0.3;
        let z = array![1.0, -1.0];
        let s2 = abar * 2.25 + 1.0 - abar;
        let k = abar.sqrt() * 2.25 / s2;
        let expected = array![2.0 + k * (1.0 - abar.sqrt() * 2.0), k * -1.0];
        let got = posterior_mean(&m, z.view(), abar);
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn far_points_do_not_underflow() {
        let means = array![[-300.0, 0.0], [300.0, 0.0]];
        let m = GaussianMixture::new(means, array![0.5, 0.5], 0.1).unwrap();
        let post = posterior_mean(&m, array![1000.0, 0.0].view(), 0.99);
        assert!(post.iter().all(|v| v.is_finite()));
        let r = responsibilities(&m, array![1000.0, 0.0].view(), 0.99);
        assert_eq!(r[1], 1.0);
    }
}
