//! Dense multi-layer perceptrons with exact backward passes, plus the
//! optimizers used for training. Rows are samples; columns are channels.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Relu {
            z.mapv_inplace(|v| v.max(0.0));
        }
    }
}

/// Affine layer `y = act(x W + b)` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer inputs and pre-activations recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// He-initialized MLP over `dims` (input first). Hidden layers use
    /// `hidden`; the last layer uses `output`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        let mut mlp = Self::zeros(dims, hidden, output)?;
        for layer in &mut mlp.layers {
            let fan_in = layer.weight.nrows() as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            layer.weight.mapv_inplace(|_| normal.sample(rng));
        }
        Ok(mlp)
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParameter(format!("bad mlp dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                weight: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
                activation: if i + 2 == dims.len() { output } else { hidden },
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("mlp needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::DimensionMismatch(format!("layer {i}: bias does not match weight")));
            }
            if i > 0 && layers[i - 1].weight.ncols() != l.weight.nrows() {
                return Err(Error::DimensionMismatch(format!("layer {i}: input does not chain")));
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.ncols()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.ncols()));
        d
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "mlp expects {} input channels, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for l in &self.layers {
            h = h.dot(&l.weight) + &l.bias;
            l.activation.apply(&mut h);
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(&x)?;
        let mut cache = MlpCache::default();
        let mut h = x.to_owned();
        for l in &self.layers {
            let z = h.dot(&l.weight) + &l.bias;
            cache.inputs.push(h);
            h = z.clone();
            l.activation.apply(&mut h);
            cache.pre.push(z);
        }
        Ok((h, cache))
    }

    /// Gradients of `sum(upstream ⊙ output)` with respect to the parameters
    /// and the input, using the activations recorded in `cache`.
    pub fn backward(&self, cache: &MlpCache, upstream: ArrayView2<f64>) -> Result<(MlpGrads, Array2<f64>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::MissingForwardCache);
        }
        let rows = cache.inputs[0].nrows();
        if upstream.dim() != (rows, self.output_dim()) {
            return Err(Error::DimensionMismatch(format!(
                "upstream gradient {:?} does not match output ({rows}, {})",
                upstream.dim(),
                self.output_dim()
            )));
        }
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            if l.activation == Activation::Relu {
                ndarray::Zip::from(&mut delta).and(&cache.pre[i]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            weights.push(cache.inputs[i].t().dot(&delta));
            biases.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&l.weight.t());
        }
        weights.reverse();
        biases.reverse();
        Ok((MlpGrads { weights, biases }, delta))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Appends all parameters (per layer: weight row-major, then bias).
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.bias.iter());
        }
    }

    /// Reads parameters in [`Mlp::write_params`] order; returns the rest.
    pub fn read_params<'a>(&mut self, mut src: &'a [f64]) -> Result<&'a [f64]> {
        if src.len() < self.param_count() {
            return Err(Error::DimensionMismatch("parameter vector too short".into()));
        }
        for l in &mut self.layers {
            let (w, rest) = src.split_at(l.weight.len());
            l.weight.iter_mut().zip(w).for_each(|(a, b)| *a = *b);
            let (b, rest) = rest.split_at(l.bias.len());
            l.bias.iter_mut().zip(b).for_each(|(a, b)| *a = *b);
            src = rest;
        }
        Ok(src)
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: mlp.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Same order as [`Mlp::write_params`].
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
    }
}

/// Row-wise concatenation `[a | b]`.
pub fn concat_cols<'a>(a: ArrayView2<'a, f64>, b: ArrayView2<'a, f64>) -> Result<Array2<f64>> {
    ndarray::concatenate(Axis(1), &[a, b]).map_err(|e| Error::DimensionMismatch(e.to_string()))
}

/// Splits columns at `at` into owned halves.
pub fn split_cols(x: ArrayView2<f64>, at: usize) -> (Array2<f64>, Array2<f64>) {
    (x.slice(s![.., ..at]).to_owned(), x.slice(s![.., at..]).to_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Sgd { lr: f64, momentum: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Sgd {
            lr: 1e-2,
            momentum: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch("optimizer state size mismatch".into()));
        }
        self.t += 1;
        match self.config {
            OptimizerConfig::Sgd { lr, momentum } => {
                for ((p, g), m) in params.iter_mut().zip(grads).zip(&mut self.m) {
                    *m = momentum * *m + g;
                    *p -= lr * *m;
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
