use ndarray::{Array1, ArrayView1, ArrayView2};

use super::cost::{check_norm_order, lp_distance};
use super::sinkhorn::TransportPlan;
use crate::error::{Error, Result};

/// Gradient of `‖z − y‖_p` with respect to `z`.
///
/// Coincident points get the zero vector. For `p = 1` each coordinate uses
/// the subgradient `0` where the difference is exactly zero.
pub fn lp_distance_grad(z: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, p: f64) -> Array1<f64> {
    let diff = &z - &y;
    if p == 1.0 {
        return diff.mapv(|d| if d == 0.0 { 0.0 } else { d.signum() });
    }
    let norm = lp_distance(z, y, p);
    if norm == 0.0 {
        return Array1::zeros(z.len());
    }
    if p == 2.0 {
        return diff / norm;
    }
    let scale = norm.powf(p - 1.0);
    diff.mapv(|d| d.signum() * d.abs().powf(p - 1.0) / scale)
}

/// Gradient of `⟨P, D(z)⟩` in the position of row point `query`, with the
/// plan held fixed: `Σⱼ P[query][j] · ∇_z ‖z − b[j]‖_p` at `z = a[query]`.
pub fn grad_fixed_plan(
    plan: &TransportPlan,
    query: usize,
    a: ArrayView2<'_, f64>,
    b: ArrayView2<'_, f64>,
    p: f64,
) -> Result<Array1<f64>> {
    check_norm_order(p)?;
    let coupling = plan.coupling();
    if coupling.nrows() != a.nrows() || coupling.ncols() != b.nrows() {
        return Err(Error::SizeMismatch(format!(
            "plan is {:?} but point sets have {} and {} rows",
            coupling.dim(),
            a.nrows(),
            b.nrows()
        )));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::SizeMismatch("point dimensions differ".into()));
    }
    if query >= a.nrows() {
        return Err(Error::InvalidInput(format!(
            "query row {query} out of range for {} rows",
            a.nrows()
        )));
    }
    let z = a.row(query);
    let mut grad = Array1::<f64>::zeros(a.ncols());
    for (j, &weight) in coupling.row(query).iter().enumerate() {
        if weight != 0.0 {
            grad.scaled_add(weight, &lp_distance_grad(z, b.row(j), p));
        }
    }
    Ok(grad)
}
