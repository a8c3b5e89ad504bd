//! Dense layers with explicit backward passes.
//!
//! Everything is `f64` and row-major: a batch is an `N x features` matrix.
//! Every parameter and buffer is stored as a 2-D array so that EMA updates,
//! checkpoints and fingerprints can walk one flat list of tensors.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Linear {
    /// Uniform `±1/sqrt(in)` initialization for weights and bias.
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((input, output), || rng.gen_range(-bound..bound)),
            bias: Array2::from_shape_simple_fn((1, output), || rng.gen_range(-bound..bound)),
        }
    }

    pub fn from_weights(weight: Array2<f64>, bias: Array2<f64>) -> Result<Self> {
        if bias.dim() != (1, weight.ncols()) {
            return Err(Error::shape(format!(
                "bias {:?} for weight {:?}",
                bias.dim(),
                weight.dim()
            )));
        }
        Ok(Self { weight, bias })
    }
}

/// Batch normalization over the batch axis with learnable affine terms and
/// running statistics for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array2<f64>,
    pub beta: Array2<f64>,
    pub running_mean: Array2<f64>,
    pub running_var: Array2<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array2::ones((1, dim)),
            beta: Array2::zeros((1, dim)),
            running_mean: Array2::zeros((1, dim)),
            running_var: Array2::ones((1, dim)),
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum Layer {
    Linear(Linear),
    BatchNorm(BatchNorm),
    Relu,
}

impl Layer {
    fn input_dim(&self) -> Option<usize> {
        match self {
            Layer::Linear(l) => Some(l.weight.nrows()),
            Layer::BatchNorm(b) => Some(b.gamma.ncols()),
            Layer::Relu => None,
        }
    }

    fn output_dim(&self) -> Option<usize> {
        match self {
            Layer::Linear(l) => Some(l.weight.ncols()),
            Layer::BatchNorm(b) => Some(b.gamma.ncols()),
            Layer::Relu => None,
        }
    }
}

/// How batch normalization behaves in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Batch statistics; running statistics are left alone.
    BatchStats,
    /// Running statistics.
    Eval,
}

#[derive(Debug, Clone)]
enum LayerCache {
    Linear { input: Array2<f64> },
    BatchNorm { xhat: Array2<f64>, inv_std: Array1<f64>, batch: bool },
    Relu { output: Array2<f64> },
}

/// Saved activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

/// A stack of layers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let mut width: Option<usize> = None;
        for layer in &layers {
            if let (Some(w), Some(i)) = (width, layer.input_dim()) {
                if w != i {
                    return Err(Error::shape(format!("layer expects {i} inputs, previous emits {w}")));
                }
            }
            if let Some(o) = layer.output_dim() {
                width = Some(o);
            }
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.iter().find_map(Layer::input_dim)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(Layer::output_dim)
    }

    /// Forward pass. Only [`Mode::Train`] mutates (running statistics).
    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, ForwardCache)> {
        let (out, cache, stats) = self.forward_impl(x, mode != Mode::Eval)?;
        if mode == Mode::Train {
            let mut stats = stats.into_iter();
            for layer in &mut self.layers {
                if let Layer::BatchNorm(bn) = layer {
                    let (mean, var) = stats.next().expect("one entry per batch-norm layer");
                    let m = bn.momentum;
                    bn.running_mean
                        .zip_mut_with(&mean.insert_axis(Axis(0)), |r, &v| *r = (1.0 - m) * *r + m * v);
                    bn.running_var
                        .zip_mut_with(&var.insert_axis(Axis(0)), |r, &v| *r = (1.0 - m) * *r + m * v);
                }
            }
        }
        Ok((out, cache))
    }

    /// Forward pass that never touches running statistics.
    pub fn forward_frozen(&self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, ForwardCache)> {
        let (out, cache, _) = self.forward_impl(x, mode != Mode::Eval)?;
        Ok((out, cache))
    }

    /// Returns output, cache, and per-BN (batch mean, unbiased batch var).
    #[allow(clippy::type_complexity)]
    fn forward_impl(
        &self,
        x: &Array2<f64>,
        batch_stats: bool,
    ) -> Result<(Array2<f64>, ForwardCache, Vec<(Array1<f64>, Array1<f64>)>)> {
        if let Some(d) = self.input_dim() {
            if x.ncols() != d {
                return Err(Error::shape(format!("input has {} features, expected {d}", x.ncols())));
            }
        }
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut stats = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Linear(l) => {
                    let out = h.dot(&l.weight) + &l.bias;
                    caches.push(LayerCache::Linear { input: h });
                    h = out;
                }
                Layer::BatchNorm(bn) => {
                    let n = h.nrows();
                    let use_batch = batch_stats && n > 0;
                    let (mean, var) = if use_batch {
                        let mean = h.mean_axis(Axis(0)).expect("non-empty batch");
                        let centered = &h - &mean.view().insert_axis(Axis(0));
                        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
                        (mean, var)
                    } else {
                        (bn.running_mean.row(0).to_owned(), bn.running_var.row(0).to_owned())
                    };
                    let inv_std = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                    let xhat = (&h - &mean.view().insert_axis(Axis(0))) * inv_std.view().insert_axis(Axis(0));
                    let out = &xhat * &bn.gamma + &bn.beta;
                    if use_batch {
                        let unbiased = if n > 1 {
                            var.mapv(|v| v * n as f64 / (n - 1) as f64)
                        } else {
                            var.clone()
                        };
                        stats.push((mean, unbiased));
                    }
                    caches.push(LayerCache::BatchNorm {
                        xhat,
                        inv_std,
                        batch: use_batch,
                    });
                    h = out;
                }
                Layer::Relu => {
                    h.mapv_inplace(|v| v.max(0.0));
                    caches.push(LayerCache::Relu { output: h.clone() });
                }
            }
        }
        Ok((h, ForwardCache { layers: caches }, stats))
    }

    /// Backpropagate `grad_out`. Returns parameter gradients in
    /// [`Sequential::params`] order and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, grad_out: Array2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let mut grads_rev: Vec<Array2<f64>> = Vec::new();
        let mut g = grad_out;
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            match (layer, c) {
                (Layer::Linear(l), LayerCache::Linear { input }) => {
                    let gw = input.t().dot(&g);
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    g = g.dot(&l.weight.t());
                    grads_rev.push(gb);
                    grads_rev.push(gw);
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm { xhat, inv_std, batch }) => {
                    let ggamma = (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gxhat = &g * &bn.gamma;
                    let scale = inv_std.view().insert_axis(Axis(0));
                    g = if *batch {
                        let n = g.nrows() as f64;
                        let mean_g = gxhat.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
                        let mean_gx = (&gxhat * xhat).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
                        let _ = n;
                        (&gxhat - &mean_g - &(xhat * &mean_gx)) * scale
                    } else {
                        &gxhat * &scale
                    };
                    grads_rev.push(gbeta);
                    grads_rev.push(ggamma);
                }
                (Layer::Relu, LayerCache::Relu { output }) => {
                    g.zip_mut_with(output, |gv, &o| {
                        if o <= 0.0 {
                            *gv = 0.0
                        }
                    });
                }
                _ => unreachable!("cache does not match layer"),
            }
        }
        grads_rev.reverse();
        (grads_rev, g)
    }

    /// Trainable tensors: linear weight and bias, batch-norm gamma and beta.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Linear(l) => out.extend([&l.weight, &l.bias]),
                Layer::BatchNorm(b) => out.extend([&b.gamma, &b.beta]),
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Linear(l) => out.extend([&mut l.weight, &mut l.bias]),
                Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta]),
                Layer::Relu => {}
            }
        }
        out
    }

    /// Non-trainable state: batch-norm running statistics.
    pub fn buffers(&self) -> Vec<&Array2<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::BatchNorm(b) = layer {
                out.extend([&b.running_mean, &b.running_var]);
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.split_mut().1
    }

    /// Parameters and buffers borrowed mutably at the same time.
    pub fn split_mut(&mut self) -> (Vec<&mut Array2<f64>>, Vec<&mut Array2<f64>>) {
        let (mut params, mut buffers) = (Vec::new(), Vec::new());
        for layer in &mut self.layers {
            match layer {
                Layer::Linear(l) => params.extend([&mut l.weight, &mut l.bias]),
                Layer::BatchNorm(b) => {
                    params.extend([&mut b.gamma, &mut b.beta]);
                    buffers.extend([&mut b.running_mean, &mut b.running_var]);
                }
                Layer::Relu => {}
            }
        }
        (params, buffers)
    }
}
