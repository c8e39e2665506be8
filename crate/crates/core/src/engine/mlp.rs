//! Dense ReLU network with a softmax cross-entropy head.
//!
//! The same [`Mlp`] type holds a full network, a client or server slice, and
//! gradients (a gradient is a network-shaped set of parameters).

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::delay::ModelProfile;
use crate::error::{Error, Result};

/// Row-major `rows x cols` matrix; rows are samples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self { rows: rows.len(), cols, data: rows.concat() }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out x n_in`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
            ..*self
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows, self.n_out);
        for r in 0..x.rows {
            let xr = x.row(r);
            for o in 0..self.n_out {
                let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
                let mut acc = self.bias[o];
                for (wi, xi) in w.iter().zip(xr) {
                    acc += wi * xi;
                }
                z.data[r * self.n_out + o] = acc;
            }
        }
        z
    }

    fn activate(&self, z: &Matrix) -> Matrix {
        if !self.relu {
            return z.clone();
        }
        Matrix { data: z.data.iter().map(|v| v.max(0.0)).collect(), ..*z }
    }

    /// Given `dL/da` for this layer's output, returns the layer gradient and `dL/dx`.
    fn backward(&self, input: &Matrix, pre: &Matrix, grad_out: &Matrix) -> (Dense, Matrix) {
        let mut dz = grad_out.clone();
        if self.relu {
            for (g, z) in dz.data.iter_mut().zip(&pre.data) {
                if *z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        let mut grad = self.zeros_like();
        let mut dx = Matrix::zeros(input.rows, self.n_in);
        for r in 0..input.rows {
            let xr = input.row(r);
            for o in 0..self.n_out {
                let g = dz.data[r * self.n_out + o];
                if g == 0.0 {
                    continue;
                }
                grad.bias[o] += g;
                let w = &self.weights[o * self.n_in..(o + 1) * self.n_in];
                let gw = &mut grad.weights[o * self.n_in..(o + 1) * self.n_in];
                let dxr = &mut dx.data[r * self.n_in..(r + 1) * self.n_in];
                for i in 0..self.n_in {
                    gw[i] += g * xr[i];
                    dxr[i] += g * w[i];
                }
            }
        }
        (grad, dx)
    }
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ForwardCache {
    /// Input of each layer.
    pub inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// He-initialised network with the given layer widths (input first). Hidden
    /// layers use ReLU; the last layer emits logits.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config("model.widths", "need at least two positive widths"));
        }
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (n_in, n_out) = (w[0], w[1]);
                let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std");
                Dense {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out).map(|_| normal.sample(rng)).collect(),
                    bias: vec![0.0; n_out],
                    relu: l + 1 < n,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(Dense::zeros_like).collect() }
    }

    /// Layers `1..=split` and `split+1..=L`.
    pub fn split_at(&self, split: usize) -> (Mlp, Mlp) {
        let (c, s) = self.layers.split_at(split.min(self.layers.len()));
        (Mlp { layers: c.to_vec() }, Mlp { layers: s.to_vec() })
    }

    pub fn joined(client: &Mlp, server: &Mlp) -> Mlp {
        Mlp { layers: client.layers.iter().chain(&server.layers).cloned().collect() }
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.n_in == b.n_in && a.n_out == b.n_out && a.relu == b.relu)
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    /// Squared L2 norm of each layer's parameters.
    pub fn layer_sq_norms(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| l.weights.iter().chain(&l.bias).map(|v| v * v).sum())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Mlp) {
        for (p, g) in self.params_mut().zip(other.params()) {
            *p += alpha * g;
        }
    }

    pub fn sq_distance(&self, other: &Mlp) -> f64 {
        self.params().zip(other.params()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, ForwardCache) {
        let mut cache = ForwardCache::default();
        let mut a = x.clone();
        for layer in &self.layers {
            let z = layer.forward(&a);
            let next = layer.activate(&z);
            cache.inputs.push(a);
            cache.pre.push(z);
            a = next;
        }
        (a, cache)
    }

    /// Back-propagates `grad_out` (gradient at this network's output) and
    /// returns the parameter gradient together with the gradient at its input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> (Mlp, Matrix) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (lg, dx) = layer.backward(&cache.inputs[l], &cache.pre[l], &g);
            grads.push(lg);
            g = dx;
        }
        grads.reverse();
        (Mlp { layers: grads }, g)
    }
}

/// Mean softmax cross-entropy over the batch and its gradient at the logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = logits.rows as f64;
    let mut grad = Matrix::zeros(logits.rows, logits.cols);
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        loss += sum.ln() + max - row[y];
        for (c, e) in exps.iter().enumerate() {
            let target = if c == y { 1.0 } else { 0.0 };
            grad.data[r * logits.cols + c] = (e / sum - target) / n;
        }
    }
    (loss / n, grad)
}

pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0
}

/// Delay-model profile of a dense network with `bits_per_value`-bit parameters
/// and activations. The smashed payload per sample is the split-layer
/// activations plus one label of `label_bits`.
pub fn profile_for_widths(widths: &[usize], bits_per_value: f64, label_bits: f64, shape_const: f64) -> ModelProfile {
    let pairs: Vec<(f64, f64)> = widths.windows(2).map(|w| (w[0] as f64, w[1] as f64)).collect();
    ModelProfile {
        param_bits: pairs.iter().map(|(i, o)| bits_per_value * (i * o + o)).collect(),
        activation_bits: pairs.iter().map(|(_, o)| bits_per_value * o + label_bits).collect(),
        fwd_flops: pairs.iter().map(|(i, o)| 2.0 * i * o).collect(),
        bwd_flops: pairs.iter().map(|(i, o)| 4.0 * i * o).collect(),
        shape_const,
    }
}
