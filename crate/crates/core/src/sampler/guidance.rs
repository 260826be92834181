//! Guidance terms added to each reverse step.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::{cost_matrix, grad_fixed_plan, sinkhorn_uniform, CostMatrix, TransportPlan};

/// How the Sinkhorn entropy weight is chosen for a given cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum EntropyWeight {
    /// `λ = factor · mean(D)`, recomputed for every cost matrix.
    RelativeToMeanCost(f64),
    /// A fixed `λ`.
    Absolute(f64),
}

impl EntropyWeight {
    pub fn resolve(self, cost: &CostMatrix) -> f64 {
        match self {
            EntropyWeight::RelativeToMeanCost(f) => f * cost.mean(),
            EntropyWeight::Absolute(l) => l,
        }
    }
}

impl Default for EntropyWeight {
    fn default() -> Self {
        EntropyWeight::RelativeToMeanCost(0.1)
    }
}

/// Value, plan and fixed-plan gradient of the OT guidance at `z_t`.
#[derive(Debug, Clone)]
pub struct OtGuidance {
    pub value: f64,
    pub plan: TransportPlan,
    /// `∇_{z_t}` of `⟨P, D⟩` with `P` held fixed.
    pub gradient: Array1<f64>,
}

/// Sinkhorn distance between `[accumulated; z_t]` and a real batch, with
/// uniform marginals `1/n` on the candidates and `1/|batch|` on the batch.
pub fn ot_guidance(
    accumulated: ArrayView2<'_, f64>,
    z_t: ArrayView1<'_, f64>,
    real_batch: ArrayView2<'_, f64>,
    lambda: EntropyWeight,
    iterations: usize,
    p: f64,
) -> Result<OtGuidance> {
    if real_batch.nrows() == 0 {
        return Err(Error::InvalidInput("real batch is empty".into()));
    }
    let current = z_t.insert_axis(Axis(0));
    let rows: Array2<f64> = if accumulated.nrows() == 0 {
        current.to_owned()
    } else {
        concatenate(Axis(0), &[accumulated, current])
            .map_err(|e| Error::SizeMismatch(e.to_string()))?
    };
    let cost = cost_matrix(rows.view(), real_batch, p)?;
    let query = rows.nrows() - 1;
    if cost.max() == 0.0 {
        // Every candidate coincides with every real point.
        let n = rows.nrows();
        let m = real_batch.nrows();
        let plan = TransportPlan::new(
            Array2::from_elem((n, m), 1.0 / (n * m) as f64),
            Array1::from_elem(n, 1.0 / n as f64),
            Array1::from_elem(m, 1.0 / m as f64),
        )?;
        return Ok(OtGuidance {
            value: 0.0,
            plan,
            gradient: Array1::zeros(z_t.len()),
        });
    }
    let result = sinkhorn_uniform(&cost, lambda.resolve(&cost), iterations)?;
    let gradient = grad_fixed_plan(&result.plan, query, rows.view(), real_batch, p)?;
    Ok(OtGuidance {
        value: result.distance,
        plan: result.plan,
        gradient,
    })
}

/// The guidance value `G_W` alone.
pub fn ot_guidance_value(
    accumulated: ArrayView2<'_, f64>,
    z_t: ArrayView1<'_, f64>,
    real_batch: ArrayView2<'_, f64>,
    lambda: EntropyWeight,
    iterations: usize,
) -> Result<f64> {
    Ok(ot_guidance(accumulated, z_t, real_batch, lambda, iterations, 1.0)?.value)
}

fn cosine(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(&b) / (na * nb)
    }
}

/// Mean cosine similarity between `z` and the accumulated latents; 0 when
/// there are none. Zero vectors contribute 0.
pub fn diversity_guidance(z: ArrayView1<'_, f64>, accumulated: ArrayView2<'_, f64>) -> f64 {
    if accumulated.nrows() == 0 {
        return 0.0;
    }
    let total: f64 = accumulated.axis_iter(Axis(0)).map(|m| cosine(z, m)).sum();
    total / accumulated.nrows() as f64
}

/// Gradient of [`diversity_guidance`] with respect to `z`.
pub fn diversity_gradient(z: ArrayView1<'_, f64>, accumulated: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut grad = Array1::<f64>::zeros(z.len());
    if accumulated.nrows() == 0 {
        return grad;
    }
    let nz = z.dot(&z).sqrt();
    if nz == 0.0 {
        return grad;
    }
    for m in accumulated.axis_iter(Axis(0)) {
        let nm = m.dot(&m).sqrt();
        if nm == 0.0 {
            continue;
        }
        let cos = z.dot(&m) / (nz * nm);
        grad.scaled_add(1.0 / (nz * nm), &m);
        grad.scaled_add(-cos / (nz * nz), &z);
    }
    grad / accumulated.nrows() as f64
}
