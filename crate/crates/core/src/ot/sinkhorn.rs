//! Entropic optimal transport by Sinkhorn scaling.
//!
//! Three solvers share one result type:
//!
//! - [`sinkhorn_uniform`] is the reference: the Gibbs kernel `exp(−D/λ)` is
//!   rescaled in place, rows then columns, for a fixed number of sweeps.
//!   Marginals are uniform (`1/n` per row, `1/m` per column).
//! - [`sinkhorn_log`] runs the same sweeps on dual potentials in log space so
//!   that small `λ` cannot underflow the kernel.
//! - [`sinkhorn_marginals`] is the `u ← a / (K v + δ)`, `v ← b / (Kᵀ u + δ)`
//!   scaling-vector form used for class-wise label-image transport.
//!
//! All solvers are iteration-bounded. The achieved marginal violation is
//! recorded on the result so callers can assert quality themselves.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::cost::CostMatrix;
use crate::error::{Error, Result};

/// Default additive stabiliser for [`sinkhorn_marginals`].
pub const DEFAULT_DELTA: f64 = 1e-9;

/// A nonnegative coupling together with the marginals it was fitted to.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    coupling: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl TransportPlan {
    pub fn new(
        coupling: Array2<f64>,
        row_marginal: Array1<f64>,
        col_marginal: Array1<f64>,
    ) -> Result<Self> {
        if coupling.nrows() != row_marginal.len() || coupling.ncols() != col_marginal.len() {
            return Err(Error::SizeMismatch(format!(
                "coupling is {}x{} but marginals have lengths {} and {}",
                coupling.nrows(),
                coupling.ncols(),
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        if coupling.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "coupling entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            coupling,
            row_marginal,
            col_marginal,
        })
    }

    /// The only feasible plan between two uniform marginals of size 1.
    pub fn singleton() -> Self {
        Self {
            coupling: Array2::from_elem((1, 1), 1.0),
            row_marginal: Array1::ones(1),
            col_marginal: Array1::ones(1),
        }
    }

    pub fn coupling(&self) -> ArrayView2<'_, f64> {
        self.coupling.view()
    }

    pub fn row_marginal(&self) -> ArrayView1<'_, f64> {
        self.row_marginal.view()
    }

    pub fn col_marginal(&self) -> ArrayView1<'_, f64> {
        self.col_marginal.view()
    }

    pub fn total_mass(&self) -> f64 {
        self.coupling.sum()
    }

    /// Largest absolute deviation of any row or column sum from its target.
    pub fn max_marginal_violation(&self) -> f64 {
        let rows = self
            .coupling
            .sum_axis(Axis(1))
            .iter()
            .zip(self.row_marginal.iter())
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max);
        let cols = self
            .coupling
            .sum_axis(Axis(0))
            .iter()
            .zip(self.col_marginal.iter())
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    /// Frobenius inner product `⟨P, D⟩`, summed in row-major order.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        frobenius(self.coupling.view(), cost.values())
    }
}

/// Output of every Sinkhorn variant.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    pub plan: TransportPlan,
    /// `⟨plan, D⟩`; identical to `plan.cost(D)` bit for bit.
    pub distance: f64,
    pub iterations_run: usize,
    pub max_marginal_violation: f64,
}

impl SinkhornResult {
    fn from_plan(plan: TransportPlan, cost: &CostMatrix, iterations: usize) -> Self {
        let distance = plan.cost(cost);
        let max_marginal_violation = plan.max_marginal_violation();
        Self {
            plan,
            distance,
            iterations_run: iterations,
            max_marginal_violation,
        }
    }
}

fn frobenius(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn check_params(lambda: f64, iterations: usize) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "entropy weight must be positive, got {lambda}"
        )));
    }
    if iterations == 0 {
        return Err(Error::InvalidInput("at least one Sinkhorn iteration is required".into()));
    }
    Ok(())
}

fn uniform(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

/// `D_ij − r_i − c_j` with `r` the row minima of `D` and `c` the column
/// minima of `D − r`. Every row and column keeps a zero entry.
fn reduced_cost(cost: &CostMatrix) -> Array2<f64> {
    let mut d = cost.values().to_owned();
    for mut row in d.axis_iter_mut(Axis(0)) {
        let min = row.fold(f64::INFINITY, |a, &b| a.min(b));
        row.mapv_inplace(|x| x - min);
    }
    for mut col in d.axis_iter_mut(Axis(1)) {
        let min = col.fold(f64::INFINITY, |a, &b| a.min(b));
        col.mapv_inplace(|x| x - min);
    }
    d
}

/// `exp(−(D_ij − min_j D_ij)/λ)`. The per-row shift is absorbed by the row
/// scaling, so the plan is unchanged, and no row can underflow entirely.
fn gibbs_kernel(cost: &CostMatrix, lambda: f64) -> Array2<f64> {
    let mut k = cost.values().to_owned();
    for mut row in k.axis_iter_mut(Axis(0)) {
        let min = row.fold(f64::INFINITY, |a, &b| a.min(b));
        row.mapv_inplace(|d| (-(d - min) / lambda).exp());
    }
    k
}

/// Fails if any row (column) of `kernel` that must carry mass sums to zero.
fn check_kernel_support(
    kernel: &Array2<f64>,
    row_mass: ArrayView1<'_, f64>,
    col_mass: ArrayView1<'_, f64>,
) -> Result<()> {
    for (i, row) in kernel.axis_iter(Axis(0)).enumerate() {
        if row_mass[i] > 0.0 && row.iter().all(|k| *k == 0.0) {
            return Err(Error::NumericalUnderflow { axis: "row", index: i });
        }
    }
    for (j, col) in kernel.axis_iter(Axis(1)).enumerate() {
        if col_mass[j] > 0.0 && col.iter().all(|k| *k == 0.0) {
            return Err(Error::NumericalUnderflow { axis: "column", index: j });
        }
    }
    Ok(())
}

/// Sinkhorn with uniform marginals, normalising the kernel matrix directly.
///
/// Each sweep rescales every row to sum to `1/n`, then every column to sum
/// to `1/m`. Fails with [`Error::NumericalUnderflow`] instead of silently
/// renormalising when the kernel vanishes on a whole column.
pub fn sinkhorn_uniform(cost: &CostMatrix, lambda: f64, iterations: usize) -> Result<SinkhornResult> {
    check_params(lambda, iterations)?;
    let (n, m) = (cost.nrows(), cost.ncols());
    let rows = uniform(n);
    let cols = uniform(m);
    let mut k = gibbs_kernel(cost, lambda);
    check_kernel_support(&k, rows.view(), cols.view())?;

    let row_target = 1.0 / n as f64;
    let col_target = 1.0 / m as f64;
    let mut col_sums = Array1::<f64>::zeros(m);
    for _ in 0..iterations {
        for (i, mut row) in k.axis_iter_mut(Axis(0)).enumerate() {
            let s: f64 = row.sum();
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::NumericalUnderflow { axis: "row", index: i });
            }
            let scale = row_target / s;
            row.mapv_inplace(|x| x * scale);
        }
        col_sums.fill(0.0);
        for row in k.axis_iter(Axis(0)) {
            col_sums += &row;
        }
        for (j, s) in col_sums.iter().enumerate() {
            if !(*s > 0.0 && s.is_finite()) {
                return Err(Error::NumericalUnderflow { axis: "column", index: j });
            }
        }
        let scales = col_sums.mapv(|s| col_target / s);
        for mut row in k.axis_iter_mut(Axis(0)) {
            row *= &scales;
        }
    }
    let plan = TransportPlan {
        coupling: k,
        row_marginal: rows,
        col_marginal: cols,
    };
    Ok(SinkhornResult::from_plan(plan, cost, iterations))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_marginal(name: &'static str, m: ArrayView1<'_, f64>, len: usize) -> Result<()> {
    if m.len() != len {
        return Err(Error::SizeMismatch(format!(
            "marginal `{name}` has length {} but the cost matrix needs {len}",
            m.len()
        )));
    }
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "marginal `{name}` must be finite and nonnegative"
        )));
    }
    let total = m.sum();
    if total == 0.0 {
        return Err(Error::EmptyMarginal(name));
    }
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "marginal `{name}` sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// Log-domain Sinkhorn for arbitrary marginals.
///
/// Runs the same row-then-column sweeps as [`sinkhorn_uniform`] on the dual
/// potentials `f`, `g`, with `P_ij = exp((f_i + g_j − D_ij)/λ)`, so it agrees
/// with the multiplicative form wherever that one does not underflow.
pub fn sinkhorn_log(
    cost: &CostMatrix,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    lambda: f64,
    iterations: usize,
) -> Result<SinkhornResult> {
    check_params(lambda, iterations)?;
    let (n, m) = (cost.nrows(), cost.ncols());
    check_marginal("a", a, n)?;
    check_marginal("b", b, m)?;
    let d = cost.values();
    let log_a = a.mapv(f64::ln);
    let log_b = b.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);

    for _ in 0..iterations {
        for i in 0..n {
            f[i] = if a[i] == 0.0 {
                f64::NEG_INFINITY
            } else {
                let row = d.row(i);
                let lse = log_sum_exp((0..m).map(|j| (g[j] - row[j]) / lambda));
                lambda * (log_a[i] - lse)
            };
        }
        for j in 0..m {
            g[j] = if b[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                let col = d.column(j);
                let lse = log_sum_exp((0..n).map(|i| (f[i] - col[i]) / lambda));
                lambda * (log_b[j] - lse)
            };
        }
    }

    let coupling = Array2::from_shape_fn((n, m), |(i, j)| {
        if f[i] == f64::NEG_INFINITY || g[j] == f64::NEG_INFINITY {
            0.0
        } else {
            ((f[i] + g[j] - d[[i, j]]) / lambda).exp()
        }
    });
    let plan = TransportPlan::new(coupling, a.to_owned(), b.to_owned())?;
    Ok(SinkhornResult::from_plan(plan, cost, iterations))
}

/// [`sinkhorn_log`] with uniform marginals.
pub fn sinkhorn_uniform_log(
    cost: &CostMatrix,
    lambda: f64,
    iterations: usize,
) -> Result<SinkhornResult> {
    let a = uniform(cost.nrows());
    let b = uniform(cost.ncols());
    sinkhorn_log(cost, a.view(), b.view(), lambda, iterations)
}

/// Sinkhorn with general marginals via stabilised scaling vectors.
///
/// `u` and `v` start at `1/N1` and `1/N2`; each iteration sets
/// `u ← a / (K v + δ)` then `v ← b / (Kᵀ u + δ)`, and the plan is
/// `diag(u) K diag(v)`. After every iteration the scalings are folded into
/// dual potentials and into `K`, so `u` and `v` stay near 1 and `δ` only
/// guards the division instead of capping a scaling at `b/δ` once the
/// kernel entries it needs fall below `δ`. An all-zero marginal is refused
/// with [`Error::EmptyMarginal`]; callers that skip such classes check
/// first.
pub fn sinkhorn_marginals(
    cost: &CostMatrix,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
    epsilon: f64,
    iterations: usize,
    delta: f64,
) -> Result<SinkhornResult> {
    check_params(epsilon, iterations)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidInput(format!("stabiliser must be positive, got {delta}")));
    }
    let (n, m) = (cost.nrows(), cost.ncols());
    check_marginal("a", a, n)?;
    check_marginal("b", b, m)?;
    let d = reduced_cost(cost);
    let mut k = d.mapv(|x| (-x / epsilon).exp());
    check_kernel_support(&k, a, b)?;

    // K = diag(e^{f/ε}) exp(−d/ε) diag(e^{g/ε}); the initial v is folded in.
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::from_elem(m, epsilon * (1.0 / m as f64).ln());
    rebuild(&mut k, &d, &f, &g, epsilon);
    for it in 0..iterations {
        let u = &a / &(k.sum_axis(Axis(1)) + delta);
        let ktu = k.t().dot(&u);
        let v = &b / &(ktu + delta);
        f.zip_mut_with(&u, |fi, ui| *fi += epsilon * ui.ln());
        g.zip_mut_with(&v, |gj, vj| *gj += epsilon * vj.ln());
        if (it + 1) % REBUILD_EVERY == 0 {
            rebuild(&mut k, &d, &f, &g, epsilon);
        } else {
            for (mut row, ui) in k.axis_iter_mut(Axis(0)).zip(&u) {
                row.zip_mut_with(&v, |x, vj| *x *= ui * vj);
            }
        }
    }
    rebuild(&mut k, &d, &f, &g, epsilon);
    let plan = TransportPlan::new(k, a.to_owned(), b.to_owned())?;
    Ok(SinkhornResult::from_plan(plan, cost, iterations))
}

/// Between rebuilds the scalings are folded into `K` by multiplication;
/// rebuilding from the potentials restores entries that underflowed.
const REBUILD_EVERY: usize = 10;

/// `K_ij = exp((f_i + g_j − d_ij)/ε)`, zero where a potential is `−∞`.
fn rebuild(k: &mut Array2<f64>, d: &Array2<f64>, f: &Array1<f64>, g: &Array1<f64>, epsilon: f64) {
    for ((i, j), x) in k.indexed_iter_mut() {
        *x = if f[i] == f64::NEG_INFINITY || g[j] == f64::NEG_INFINITY {
            0.0
        } else {
            ((f[i] + g[j] - d[[i, j]]) / epsilon).exp()
        };
    }
}
