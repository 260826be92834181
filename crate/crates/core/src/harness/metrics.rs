//! Evaluation metrics and paired-seed statistics.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};
use crate::ot::lp_distance;

/// Fraction of `real` points whose nearest `distilled` point lies within
/// `threshold` in ℓp.
pub fn coverage(real: ArrayView2<'_, f64>, distilled: ArrayView2<'_, f64>, threshold: f64, p: f64) -> Result<f64> {
    Ok(coverage_grid(real, distilled, &[threshold], p)?[0])
}

/// [`coverage`] at several thresholds, sharing the nearest-neighbour search.
pub fn coverage_grid(
    real: ArrayView2<'_, f64>,
    distilled: ArrayView2<'_, f64>,
    thresholds: &[f64],
    p: f64,
) -> Result<Vec<f64>> {
    if real.nrows() == 0 || distilled.nrows() == 0 {
        return Err(Error::InvalidInput("coverage needs nonempty point sets".into()));
    }
    if real.ncols() != distilled.ncols() {
        return Err(Error::SizeMismatch(format!(
            "real points have {} dims, distilled {}",
            real.ncols(),
            distilled.ncols()
        )));
    }
    if thresholds.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidInput("coverage thresholds must be >= 0".into()));
    }
    let nearest: Vec<f64> = real
        .axis_iter(Axis(0))
        .map(|x| {
            distilled
                .axis_iter(Axis(0))
                .map(|y| lp_distance(x, y, p))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let n = nearest.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| nearest.iter().filter(|d| **d <= t).count() as f64 / n)
        .collect())
}

/// Mean and sample standard deviation; the deviation is absent below two
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: Option<f64>,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
    let std = (n >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    Summary { n, mean, std }
}

/// One-sided sign test of `a > b` over paired values; ties are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(format!("{} vs {} paired values", a.len(), b.len())));
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let ties = a.len() - wins - losses;
    let trials = (wins + losses) as u64;
    let p_value = if trials == 0 || wins == 0 {
        1.0
    } else {
        let binom = Binomial::new(0.5, trials).expect("valid binomial");
        binom.sf(wins as u64 - 1)
    };
    Ok(SignTest {
        wins,
        losses,
        ties,
        p_value,
    })
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut r = vec![0.0; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut end = k;
        while end + 1 < idx.len() && values[idx[end + 1]] == values[idx[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=end] {
            r[i] = avg;
        }
        k = end + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; 0 when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let ma = ra.iter().sum::<f64>() / ra.len() as f64;
    let mb = rb.iter().sum::<f64>() / rb.len() as f64;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}
