//! Exact transport values for tiny instances, used as oracles.

use itertools::Itertools;
use ndarray::{ArrayView1, ArrayView2};

use super::cost::cost_matrix;
use crate::error::{Error, Result};

/// Largest point-set size accepted by [`exact_ot_assignment`].
pub const MAX_ASSIGNMENT_SIZE: usize = 8;

/// Exact linear OT cost between two equal-size uniform point sets.
///
/// With uniform marginals on equal sizes the optimum sits on a permutation
/// (Birkhoff), so this is `min_σ (1/n) Σᵢ ‖a[i] − b[σ(i)]‖_p` by enumeration.
pub fn exact_ot_assignment(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, p: f64) -> Result<f64> {
    let n = a.nrows();
    if n != b.nrows() {
        return Err(Error::SizeMismatch(format!(
            "exact assignment needs equal sizes, got {n} and {}",
            b.nrows()
        )));
    }
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::TooLarge {
            n,
            limit: MAX_ASSIGNMENT_SIZE,
        });
    }
    let cost = cost_matrix(a, b, p)?;
    let d = cost.values();
    let best = (0..n)
        .permutations(n)
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| d[[i, j]]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(best / n as f64)
}

fn check_probability(name: &str, v: ArrayView1<'_, f64>) -> Result<()> {
    if v.len() != 2 {
        return Err(Error::SizeMismatch(format!("{name} must have length 2")));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) || (v.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("{name} must be a probability vector")));
    }
    Ok(())
}

/// Exact OT on a 2×2 cost with arbitrary marginals.
///
/// The transport polytope is the segment `P[0][0] = t` with
/// `t ∈ [max(0, a0 + b0 − 1), min(a0, b0)]` and the objective is linear in
/// `t`, so the minimum is at an endpoint.
pub fn exact_ot_2x2(cost: ArrayView2<'_, f64>, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Result<f64> {
    if cost.dim() != (2, 2) {
        return Err(Error::SizeMismatch(format!("expected a 2x2 cost, got {:?}", cost.dim())));
    }
    check_probability("a", a)?;
    check_probability("b", b)?;
    let objective = |t: f64| {
        cost[[0, 0]] * t
            + cost[[0, 1]] * (a[0] - t)
            + cost[[1, 0]] * (b[0] - t)
            + cost[[1, 1]] * (1.0 - a[0] - b[0] + t)
    };
    let lo = (a[0] + b[0] - 1.0).max(0.0);
    let hi = a[0].min(b[0]);
    Ok(objective(lo).min(objective(hi)))
}
