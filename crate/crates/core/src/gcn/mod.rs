//! Graph-convolutional node classifier.
//!
//! A stack of graph convolutions `H' = ReLU(Â·H·W + b)` over the symmetric
//! normalized adjacency `Â = D^-1/2 (max(A, Aᵀ) + I) D^-1/2`, followed by
//! per-node dense layers and a two-class softmax. Forward and backward passes
//! are written out by hand and are generic over `f32` (training) and `f64`
//! (gradient checking).

mod checkpoint;

use std::fmt::{Debug, Display};

use ndarray::{Array1, Array2, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::CodeGraph;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_VERSION};

/// Floor applied to probabilities before taking logs.
pub const EPSILON: f64 = 1e-12;

pub trait Real: LinalgScalar + Float + NumAssign + FromPrimitive + ScalarOperand + Debug + Display + Send + Sync {}

impl Real for f32 {}
impl Real for f64 {}

fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GcnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteValue(&'static str),
    #[error("expected {expected} labels, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

fn shape_err(what: &str, expected: impl Debug, got: impl Debug) -> GcnError {
    GcnError::ShapeMismatch(format!("{what}: expected {expected:?}, got {got:?}"))
}

/// Sparse `D^-1/2 (max(A, Aᵀ) + I) D^-1/2` in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(graph: &CodeGraph) -> Self {
        Self::from_edges(graph.node_count(), graph.edges())
    }

    /// Edge direction is ignored; repeated edges and self-loops collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(s, d) in edges {
            assert!(s < n && d < n, "edge ({s},{d}) out of range for {n} nodes");
            rows[s].push(d);
            rows[d].push(s);
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        let inv_sqrt: Vec<f64> = rows.iter().map(|r| 1.0 / (r.len() as f64).sqrt()).collect();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for (i, row) in rows.iter().enumerate() {
            for &j in row {
                indices.push(j);
                values.push(inv_sqrt[i] * inv_sqrt[j]);
            }
            indptr.push(indices.len());
        }
        Self { indptr, indices, values }
    }

    pub fn len(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.indices[self.indptr[i]..self.indptr[i + 1]];
        row.binary_search(&j).map_or(0.0, |k| self.values[self.indptr[i] + k])
    }

    pub fn to_dense<T: Real>(&self) -> Array2<T> {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                m[[i, self.indices[k]]] = real(self.values[k]);
            }
        }
        m
    }

    /// `Â · x`.
    pub fn apply<T: Real>(&self, x: ArrayView2<T>) -> Array2<T> {
        assert_eq!(x.nrows(), self.len(), "operand rows");
        let mut out = Array2::zeros(x.raw_dim());
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            for k in self.indptr[i]..self.indptr[i + 1] {
                row.scaled_add(real::<T>(self.values[k]), &x.row(self.indices[k]));
            }
        }
        out
    }
}

pub fn normalize_adjacency(graph: &CodeGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::from_graph(graph)
}

/// Layer widths. The last dense width is the number of classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub conv: Vec<usize>,
    pub dense: Vec<usize>,
}

impl Architecture {
    /// 7 graph convolutions of width 500, dense 300 -> 100 -> 2.
    pub fn paper() -> Self {
        Self { input: crate::features::FEATURE_DIM, conv: vec![500; 7], dense: vec![300, 100, 2] }
    }

    pub fn classes(&self) -> usize {
        *self.dense.last().expect("at least one dense layer")
    }

    /// `(fan_in, fan_out)` of every layer, convolutions first.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        let mut width = self.input;
        for &w in self.conv.iter().chain(&self.dense) {
            shapes.push((width, w));
            width = w;
        }
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn validate(&self) -> Result<(), GcnError> {
        if self.input == 0 || self.dense.last() != Some(&2) || self.conv.iter().chain(&self.dense).any(|&w| w == 0) {
            return Err(GcnError::ShapeMismatch(format!("invalid architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Real> Layer<T> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }

    fn affine(&self, x: &Array2<T>) -> Array2<T> {
        let mut z = x.dot(&self.w);
        z += &self.b;
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    arch: Architecture,
    pub conv: Vec<Layer<T>>,
    pub dense: Vec<Layer<T>>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(arch: &Architecture) -> Self {
        let shapes = arch.shapes();
        let (conv, dense) = shapes.split_at(arch.conv.len());
        Self {
            arch: arch.clone(),
            conv: conv.iter().map(|&(i, o)| Layer::zeros(i, o)).collect(),
            dense: dense.iter().map(|&(i, o)| Layer::zeros(i, o)).collect(),
        }
    }

    /// Weights drawn from `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init(arch: &Architecture, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(arch);
        for layer in params.layers_mut() {
            let bound = (6.0 / layer.w.nrows() as f64).sqrt();
            layer.w.mapv_inplace(|_| real(rng.random_range(-bound..bound)));
        }
        params
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer<T>> {
        self.conv.iter().chain(&self.dense)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer<T>> {
        self.conv.iter_mut().chain(&mut self.dense)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let cast = |l: &Layer<T>| Layer {
            w: l.w.mapv(|v| real::<U>(v.to_f64().unwrap())),
            b: l.b.mapv(|v| real::<U>(v.to_f64().unwrap())),
        };
        ModelParams { arch: self.arch.clone(), conv: self.conv.iter().map(cast).collect(), dense: self.dense.iter().map(cast).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }
}

/// Per-node class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub probabilities: Array2<T>,
}

impl<T: Real> Prediction<T> {
    pub fn len(&self) -> usize {
        self.probabilities.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Argmax verdicts; ties go to the clean class.
    pub fn labels(&self) -> Vec<bool> {
        self.probabilities.rows().into_iter().map(|r| r[1] > r[0]).collect()
    }
}

/// `v`, or zero when it is subnormal.
fn flush<T: Real>(v: T) -> T {
    if v.abs() < T::min_positive_value() {
        T::zero()
    } else {
        v
    }
}

fn relu<T: Real>(mut z: Array2<T>) -> Array2<T> {
    z.mapv_inplace(|v| if v < T::min_positive_value() { T::zero() } else { v });
    z
}

fn softmax_rows<T: Real>(mut z: Array2<T>) -> Array2<T> {
    for mut row in z.rows_mut() {
        let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| flush(v / sum));
    }
    z
}

/// `ReLU(Â·H·W + b)`.
pub fn gcn_layer_forward<T: Real>(
    h: ArrayView2<T>,
    adj: &NormalizedAdjacency,
    w: ArrayView2<T>,
    b: &Array1<T>,
) -> Result<Array2<T>, GcnError> {
    if h.nrows() != adj.len() {
        return Err(shape_err("feature rows", adj.len(), h.nrows()));
    }
    if h.ncols() != w.nrows() || w.ncols() != b.len() {
        return Err(shape_err("layer", (h.ncols(), b.len()), w.dim()));
    }
    let mut z = adj.apply(h).dot(&w);
    z += b;
    Ok(relu(z))
}

/// Activations kept for the backward pass.
struct Trace<T> {
    /// `Â·H` entering each convolution.
    conv_in: Vec<Array2<T>>,
    /// ReLU output of each convolution.
    conv_out: Vec<Array2<T>>,
    /// Input of each dense layer.
    dense_in: Vec<Array2<T>>,
    probabilities: Array2<T>,
}

fn check_inputs<T: Real>(features: &ArrayView2<T>, adj: &NormalizedAdjacency, params: &ModelParams<T>) -> Result<(), GcnError> {
    if features.ncols() != params.arch.input {
        return Err(shape_err("feature width", params.arch.input, features.ncols()));
    }
    if features.nrows() != adj.len() {
        return Err(shape_err("feature rows", adj.len(), features.nrows()));
    }
    Ok(())
}

fn forward_trace<T: Real>(features: ArrayView2<T>, adj: &NormalizedAdjacency, params: &ModelParams<T>) -> Result<Trace<T>, GcnError> {
    check_inputs(&features, adj, params)?;
    let mut conv_in = Vec::with_capacity(params.conv.len());
    let mut conv_out: Vec<Array2<T>> = Vec::with_capacity(params.conv.len());
    for layer in &params.conv {
        let ah = adj.apply(conv_out.last().map_or(features, |h| h.view()));
        conv_out.push(relu(layer.affine(&ah)));
        conv_in.push(ah);
    }
    let mut dense_in = Vec::with_capacity(params.dense.len());
    let mut h = conv_out.last().cloned().unwrap_or_else(|| features.to_owned());
    let last = params.dense.len() - 1;
    for (k, layer) in params.dense.iter().enumerate() {
        let z = layer.affine(&h);
        dense_in.push(std::mem::replace(&mut h, if k < last { relu(z) } else { z }));
    }
    let probabilities = softmax_rows(h);
    if probabilities.iter().any(|v| !v.is_finite()) {
        return Err(GcnError::NonFiniteValue("forward pass"));
    }
    Ok(Trace { conv_in, conv_out, dense_in, probabilities })
}

pub fn model_forward<T: Real>(
    features: ArrayView2<T>,
    adj: &NormalizedAdjacency,
    params: &ModelParams<T>,
) -> Result<Prediction<T>, GcnError> {
    forward_trace(features, adj, params).map(|t| Prediction { probabilities: t.probabilities })
}

/// Per-node weights `w[y_i]` and their sum.
fn node_weights(labels: &[bool], class_weights: Option<[f64; 2]>) -> (Vec<f64>, f64) {
    let w = class_weights.unwrap_or([1.0, 1.0]);
    let per_node: Vec<f64> = labels.iter().map(|&y| w[y as usize]).collect();
    let total = per_node.iter().sum();
    (per_node, total)
}

/// Mean of `-ln max(p[y], ε)`, weighted by `class_weights[y]` when given
/// (normalized by the total weight).
pub fn cross_entropy_loss<T: Real>(
    pred: &Prediction<T>,
    labels: &[bool],
    class_weights: Option<[f64; 2]>,
) -> Result<f64, GcnError> {
    if labels.len() != pred.len() {
        return Err(GcnError::LengthMismatch { expected: pred.len(), got: labels.len() });
    }
    let (weights, total) = node_weights(labels, class_weights);
    if total == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = labels
        .iter()
        .zip(pred.probabilities.rows())
        .zip(&weights)
        .map(|((&y, p), w)| -w * p[y as usize].to_f64().unwrap().max(EPSILON).ln())
        .sum();
    Ok(sum / total)
}

/// Loss, parameter gradients and the prediction they were computed from.
pub struct Gradients<T> {
    pub loss: f64,
    pub grads: ModelParams<T>,
    pub prediction: Prediction<T>,
}

pub fn compute_gradients<T: Real>(
    params: &ModelParams<T>,
    features: ArrayView2<T>,
    adj: &NormalizedAdjacency,
    labels: &[bool],
    class_weights: Option<[f64; 2]>,
) -> Result<Gradients<T>, GcnError> {
    if labels.len() != features.nrows() {
        return Err(GcnError::LengthMismatch { expected: features.nrows(), got: labels.len() });
    }
    let trace = forward_trace(features, adj, params)?;
    let prediction = Prediction { probabilities: trace.probabilities };
    let loss = cross_entropy_loss(&prediction, labels, class_weights)?;
    let mut grads = ModelParams::zeros(&params.arch);

    // d loss / d logits: (p - onehot(y)) * w_i / Σw, zero where the clamp is active.
    let (weights, total) = node_weights(labels, class_weights);
    let mut dz = prediction.probabilities.clone();
    for (i, mut row) in dz.rows_mut().into_iter().enumerate() {
        let y = labels[i] as usize;
        let scale = if total == 0.0 || row[y].to_f64().unwrap() < EPSILON { 0.0 } else { weights[i] / total };
        row[y] = row[y] - T::one();
        row.mapv_inplace(|v| flush(v * real(scale)));
    }

    for k in (0..params.dense.len()).rev() {
        let input = &trace.dense_in[k];
        grads.dense[k].w = input.t().dot(&dz);
        grads.dense[k].b = dz.sum_axis(Axis(0));
        if k == 0 && params.conv.is_empty() {
            break;
        }
        let mut dh = dz.dot(&params.dense[k].w.t());
        // The input came out of a ReLU (hidden dense layer or last convolution).
        dh.zip_mut_with(input, |d, &h| *d = if h <= T::zero() { T::zero() } else { flush(*d) });
        dz = dh;
    }

    for l in (0..params.conv.len()).rev() {
        grads.conv[l].w = trace.conv_in[l].t().dot(&dz);
        grads.conv[l].b = dz.sum_axis(Axis(0));
        if l == 0 {
            break;
        }
        let mut dh = adj.apply(dz.dot(&params.conv[l].w.t()).view());
        dh.zip_mut_with(&trace.conv_out[l - 1], |d, &h| *d = if h <= T::zero() { T::zero() } else { flush(*d) });
        dz = dh;
    }

    if !grads.is_finite() {
        return Err(GcnError::NonFiniteValue("gradients"));
    }
    Ok(Gradients { loss, grads, prediction })
}
