//! Small classifiers with hand-written backpropagation.
//!
//! Parameters live in one flat vector so optimisers and finite-difference
//! checks can treat every model alike. Layout, all matrices row-major:
//!
//! - linear softmax: `W (d×C)`, `b (C)`
//! - one-hidden-layer tanh MLP: `W1 (d×h)`, `b1 (h)`, `W2 (h×C)`, `b2 (C)`

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelKind {
    LinearSoftmax,
    Mlp { hidden: usize },
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::LinearSoftmax => f.write_str("linear"),
            ModelKind::Mlp { hidden } => write!(f, "mlp{hidden}"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    /// `linear` or `mlp<h>`, e.g. `mlp16`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(ModelKind::LinearSoftmax);
        }
        match s.strip_prefix("mlp").map(str::parse::<usize>) {
            Some(Ok(h)) if h > 0 => Ok(ModelKind::Mlp { hidden: h }),
            _ => Err(Error::Config(format!("unknown model kind `{s}`, expected `linear` or `mlp<h>`"))),
        }
    }
}

/// One named parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorShape {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelRecord", try_from = "ModelRecord")]
pub struct Classifier {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    pub params: Array1<f64>,
}

/// On-disk form of a [`Classifier`]: one row-major array per tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub num_classes: usize,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl From<Classifier> for ModelRecord {
    fn from(m: Classifier) -> Self {
        let mut offset = 0;
        let tensors = Classifier::shapes(m.kind, m.input_dim, m.num_classes)
            .into_iter()
            .map(|t| {
                let len = t.len();
                let values = m.params.slice(ndarray::s![offset..offset + len]).to_vec();
                offset += len;
                TensorRecord {
                    name: t.name,
                    shape: t.shape,
                    values,
                }
            })
            .collect();
        ModelRecord {
            kind: m.kind,
            input_dim: m.input_dim,
            num_classes: m.num_classes,
            tensors,
        }
    }
}

impl TryFrom<ModelRecord> for Classifier {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let shapes = Classifier::shapes(r.kind, r.input_dim, r.num_classes);
        if shapes.len() != r.tensors.len() {
            return Err(Error::format("model", format!("expected {} tensors, got {}", shapes.len(), r.tensors.len())));
        }
        let mut params = Vec::new();
        for (want, got) in shapes.iter().zip(&r.tensors) {
            if want.name != got.name || want.shape != got.shape || got.values.len() != want.len() {
                return Err(Error::format(
                    "model",
                    format!("tensor `{}` {:?} does not match expected `{}` {:?}", got.name, got.shape, want.name, want.shape),
                ));
            }
            params.extend_from_slice(&got.values);
        }
        Classifier::from_params(r.kind, r.input_dim, r.num_classes, Array1::from_vec(params))
    }
}

/// Intermediate values kept from a forward pass for the backward pass.
pub struct ForwardCache {
    hidden: Option<Array2<f64>>,
    pub logits: Array2<f64>,
}

fn block(params: &Array1<f64>, offset: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    params
        .slice(ndarray::s![offset..offset + rows * cols])
        .into_shape_with_order((rows, cols))
        .expect("contiguous parameter block")
}

impl Classifier {
    pub fn shapes(kind: ModelKind, input_dim: usize, num_classes: usize) -> Vec<TensorShape> {
        let t = |name: &str, shape: Vec<usize>| TensorShape {
            name: name.into(),
            shape,
        };
        match kind {
            ModelKind::LinearSoftmax => vec![t("w", vec![input_dim, num_classes]), t("b", vec![num_classes])],
            ModelKind::Mlp { hidden } => vec![
                t("w1", vec![input_dim, hidden]),
                t("b1", vec![hidden]),
                t("w2", vec![hidden, num_classes]),
                t("b2", vec![num_classes]),
            ],
        }
    }

    pub fn param_count(kind: ModelKind, input_dim: usize, num_classes: usize) -> usize {
        Self::shapes(kind, input_dim, num_classes).iter().map(TensorShape::len).sum()
    }

    /// Gaussian weights with standard deviation `1/√fan_in`, zero biases.
    pub fn init<R: Rng + ?Sized>(kind: ModelKind, input_dim: usize, num_classes: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || num_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "model needs input_dim >= 1 and >= 2 classes, got {input_dim} and {num_classes}"
            )));
        }
        if let ModelKind::Mlp { hidden: 0 } = kind {
            return Err(Error::InvalidInput("hidden width must be positive".into()));
        }
        let mut params = Vec::with_capacity(Self::param_count(kind, input_dim, num_classes));
        for t in Self::shapes(kind, input_dim, num_classes) {
            if t.shape.len() == 1 {
                params.extend(std::iter::repeat_n(0.0, t.len()));
            } else {
                let scale = 1.0 / (t.shape[0] as f64).sqrt();
                params.extend((0..t.len()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)));
            }
        }
        Ok(Self {
            kind,
            input_dim,
            num_classes,
            params: Array1::from_vec(params),
        })
    }

    /// Rebuilds a model from a flat parameter vector.
    pub fn from_params(kind: ModelKind, input_dim: usize, num_classes: usize, params: Array1<f64>) -> Result<Self> {
        let expected = Self::param_count(kind, input_dim, num_classes);
        if params.len() != expected {
            return Err(Error::SizeMismatch(format!(
                "{kind} with {input_dim} inputs and {num_classes} classes needs {expected} parameters, got {}",
                params.len()
            )));
        }
        Ok(Self {
            kind,
            input_dim,
            num_classes,
            params,
        })
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::SizeMismatch(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.input_dim
            )));
        }
        Ok(())
    }

    pub fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let (d, c) = (self.input_dim, self.num_classes);
        let p = &self.params;
        Ok(match self.kind {
            ModelKind::LinearSoftmax => {
                let w = block(p, 0, d, c);
                let b = p.slice(ndarray::s![d * c..]);
                ForwardCache {
                    hidden: None,
                    logits: x.dot(&w) + &b,
                }
            }
            ModelKind::Mlp { hidden: h } => {
                let w1 = block(p, 0, d, h);
                let b1 = p.slice(ndarray::s![d * h..d * h + h]);
                let off = d * h + h;
                let w2 = block(p, off, h, c);
                let b2 = p.slice(ndarray::s![off + h * c..]);
                let a = (x.dot(&w1) + &b1).mapv(f64::tanh);
                let logits = a.dot(&w2) + &b2;
                ForwardCache {
                    hidden: Some(a),
                    logits,
                }
            }
        })
    }

    /// Logits for each row of `x`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.logits)
    }

    /// Gradient of a scalar objective with respect to the flat parameters,
    /// given the objective's gradient with respect to the logits.
    pub fn backward(&self, x: ArrayView2<'_, f64>, cache: &ForwardCache, grad_logits: ArrayView2<'_, f64>) -> Array1<f64> {
        let (d, c) = (self.input_dim, self.num_classes);
        let mut grad = Array1::<f64>::zeros(self.params.len());
        match self.kind {
            ModelKind::LinearSoftmax => {
                let gw = x.t().dot(&grad_logits);
                grad.slice_mut(ndarray::s![..d * c])
                    .assign(&gw.into_shape_with_order(d * c).expect("contiguous"));
                grad.slice_mut(ndarray::s![d * c..]).assign(&grad_logits.sum_axis(Axis(0)));
            }
            ModelKind::Mlp { hidden: h } => {
                let a = cache.hidden.as_ref().expect("mlp cache holds activations");
                let off = d * h + h;
                let w2 = block(&self.params, off, h, c);
                let gw2 = a.t().dot(&grad_logits);
                let gb2 = grad_logits.sum_axis(Axis(0));
                let mut ga = grad_logits.dot(&w2.t());
                ga.zip_mut_with(a, |g, &act| *g *= 1.0 - act * act);
                let gw1 = x.t().dot(&ga);
                let gb1 = ga.sum_axis(Axis(0));
                grad.slice_mut(ndarray::s![..d * h])
                    .assign(&gw1.into_shape_with_order(d * h).expect("contiguous"));
                grad.slice_mut(ndarray::s![d * h..off]).assign(&gb1);
                grad.slice_mut(ndarray::s![off..off + h * c])
                    .assign(&gw2.into_shape_with_order(h * c).expect("contiguous"));
                grad.slice_mut(ndarray::s![off + h * c..]).assign(&gb2);
            }
        }
        grad
    }

    /// Predicted class per row; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(self.forward(x)?.axis_iter(Axis(0)).map(|r| argmax(r)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|v| v.is_finite())
    }
}

/// Index of the first maximum.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_total = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| (v - max) - log_total);
    }
    out
}

/// Pulls a gradient with respect to softmax probabilities back to logits:
/// `g_s = q ⊙ (g_q − ⟨g_q, q⟩)` per row.
pub fn softmax_backward(probs: ArrayView2<'_, f64>, grad_probs: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(probs.raw_dim());
    for ((q, g), mut o) in probs
        .axis_iter(Axis(0))
        .zip(grad_probs.axis_iter(Axis(0)))
        .zip(out.axis_iter_mut(Axis(0)))
    {
        let inner = q.dot(&g);
        for ((ov, &qv), &gv) in o.iter_mut().zip(q.iter()).zip(g.iter()) {
            *ov = qv * (gv - inner);
        }
    }
    out
}
