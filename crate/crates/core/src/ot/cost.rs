use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Pairwise ℓp ground costs between two point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    p: f64,
}

impl CostMatrix {
    /// Wraps precomputed costs. Entries must be finite and nonnegative.
    pub fn new(values: Array2<f64>, p: f64) -> Result<Self> {
        check_norm_order(p)?;
        if values.is_empty() {
            return Err(Error::InvalidInput("cost matrix has no entries".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "cost entries must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { values, p })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / self.values.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Self {
        Self {
            values: self.values.t().to_owned(),
            p: self.p,
        }
    }

    /// Keeps only the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(ndarray::Axis(0), rows),
            p: self.p,
        }
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.values
    }
}

pub(crate) fn check_norm_order(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("norm order must be >= 1, got {p}")))
    }
}

/// ‖x − y‖_p for finite p ≥ 1, with the common orders specialised.
pub fn lp_distance(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>, p: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let diffs = x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs());
    if p == 1.0 {
        diffs.sum()
    } else if p == 2.0 {
        diffs.map(|d| d * d).sum::<f64>().sqrt()
    } else {
        diffs.map(|d| d.powf(p)).sum::<f64>().powf(p.recip())
    }
}

/// Builds `D[i][j] = ‖a[i] − b[j]‖_p`.
pub fn cost_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>, p: f64) -> Result<CostMatrix> {
    check_norm_order(p)?;
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidInput("point sets must be nonempty".into()));
    }
    if a.ncols() == 0 || a.ncols() != b.ncols() {
        return Err(Error::SizeMismatch(format!(
            "point dimensions differ or are zero: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate in point set".into()));
    }
    let values = Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        lp_distance(a.row(i), b.row(j), p)
    });
    Ok(CostMatrix { values, p })
}
