//! Encoders (backbone + projection head) and the online/momentum encoder pair.

pub mod nn;
mod optim;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::objective::ViewSlot;
use crate::views::ViewMatrices;
pub use nn::{BatchNorm, ForwardCache, Layer, Linear, Mode, Sequential};
pub use optim::Sgd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    SmallMlp,
    Resnet18,
    Resnet50,
}

/// Which encoder output the probes read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    #[default]
    Backbone,
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub backbone: BackboneKind,
    /// Flattened input length (`channels * height * width`).
    pub input_dim: usize,
    /// Width of the two hidden backbone layers.
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    /// Width of the two hidden projection layers.
    pub projection_dim: usize,
    pub output_dim: usize,
}

impl EncoderSpec {
    pub fn small_mlp(input_dim: usize) -> Self {
        Self {
            backbone: BackboneKind::SmallMlp,
            input_dim,
            hidden_dim: 256,
            embedding_dim: 128,
            projection_dim: 128,
            output_dim: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.backbone != BackboneKind::SmallMlp {
            return Err(Error::config(format!(
                "backbone {:?} is not built in; use small_mlp",
                self.backbone
            )));
        }
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("embedding_dim", self.embedding_dim),
            ("projection_dim", self.projection_dim),
            ("output_dim", self.output_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be positive")));
        }
        Ok(())
    }
}

/// Cached activations of a training forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    backbone: ForwardCache,
    head: ForwardCache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub backbone: Sequential,
    pub head: Sequential,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(spec: &EncoderSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let backbone = Sequential::new(vec![
            Layer::Linear(Linear::new(spec.input_dim, spec.hidden_dim, rng)),
            Layer::BatchNorm(BatchNorm::new(spec.hidden_dim)),
            Layer::Relu,
            Layer::Linear(Linear::new(spec.hidden_dim, spec.embedding_dim, rng)),
            Layer::BatchNorm(BatchNorm::new(spec.embedding_dim)),
            Layer::Relu,
        ])?;
        let p = spec.projection_dim;
        let head = Sequential::new(vec![
            Layer::Linear(Linear::new(spec.embedding_dim, p, rng)),
            Layer::BatchNorm(BatchNorm::new(p)),
            Layer::Relu,
            Layer::Linear(Linear::new(p, p, rng)),
            Layer::BatchNorm(BatchNorm::new(p)),
            Layer::Relu,
            Layer::Linear(Linear::new(p, spec.output_dim, rng)),
            Layer::BatchNorm(BatchNorm::new(spec.output_dim)),
        ])?;
        Ok(Self { backbone, head })
    }

    /// Assemble an encoder from explicit stacks. An empty head makes the
    /// backbone output the embedding.
    pub fn from_parts(backbone: Sequential, head: Sequential) -> Result<Self> {
        if let (Some(o), Some(i)) = (backbone.output_dim(), head.input_dim()) {
            if o != i {
                return Err(Error::shape(format!("backbone emits {o}, head expects {i}")));
            }
        }
        Ok(Self { backbone, head })
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.backbone.input_dim().or_else(|| self.head.input_dim())
    }

    /// Evaluation-mode embeddings (running statistics, no side effects).
    pub fn encode(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let (h, _) = self.backbone.forward_frozen(x, Mode::Eval)?;
        Ok(self.head.forward_frozen(&h, Mode::Eval)?.0)
    }

    /// Evaluation-mode backbone features.
    pub fn features(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.backbone.forward_frozen(x, Mode::Eval)?.0)
    }

    pub fn probe_features(&self, x: &Array2<f64>, source: FeatureSource) -> Result<Array2<f64>> {
        match source {
            FeatureSource::Backbone => self.features(x),
            FeatureSource::Projection => self.encode(x),
        }
    }

    /// Training forward pass: batch statistics, running statistics updated.
    pub fn forward_train(&mut self, x: &Array2<f64>) -> Result<(Array2<f64>, EncoderCache)> {
        let (h, backbone) = self.backbone.forward(x, Mode::Train)?;
        let (z, head) = self.head.forward(&h, Mode::Train)?;
        Ok((z, EncoderCache { backbone, head }))
    }

    /// Batch-statistics forward pass with no state change and no cache.
    pub fn forward_batch_stats(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let (h, _) = self.backbone.forward_frozen(x, Mode::BatchStats)?;
        Ok(self.head.forward_frozen(&h, Mode::BatchStats)?.0)
    }

    /// Parameter gradients (in [`Encoder::params`] order) for `grad_out`.
    pub fn backward(&self, cache: &EncoderCache, grad_out: Array2<f64>) -> Vec<Array2<f64>> {
        let (mut head_grads, g) = self.head.backward(&cache.head, grad_out);
        let (mut grads, _) = self.backbone.backward(&cache.backbone, g);
        grads.append(&mut head_grads);
        grads
    }

    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut v = self.backbone.params();
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = self.backbone.params_mut();
        v.extend(self.head.params_mut());
        v
    }

    /// Parameters followed by running statistics.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut v = self.params();
        v.extend(self.backbone.buffers());
        v.extend(self.head.buffers());
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let (mut v, backbone_buffers) = self.backbone.split_mut();
        let (head_params, head_buffers) = self.head.split_mut();
        v.extend(head_params);
        v.extend(backbone_buffers);
        v.extend(head_buffers);
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// SHA-256 over every tensor's shape and bit pattern.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for t in self.tensors() {
            hasher.update((t.nrows() as u64).to_le_bytes());
            hasher.update((t.ncols() as u64).to_le_bytes());
            for v in t.iter() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Online encoder trained by gradients plus its exponential-moving-average
/// copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumPair {
    pub query: Encoder,
    pub key: Encoder,
    pub momentum: f64,
}

/// Output of [`MomentumPair::forward_routed`]. `cache` backs a single
/// backward pass through the online encoder for all `query` outputs.
#[derive(Debug, Clone)]
pub struct RoutedForward {
    pub query: Vec<Array2<f64>>,
    pub key: Vec<Array2<f64>>,
    cache: EncoderCache,
    rows: usize,
}

/// The four representations of a batch of view quadruples.
#[derive(Debug, Clone)]
pub struct QuadrupleForward {
    pub anchor_n: Array2<f64>,
    pub counterpart_a: Array2<f64>,
    pub anchor_a: Array2<f64>,
    pub counterpart_n: Array2<f64>,
    routed: RoutedForward,
}

impl QuadrupleForward {
    pub fn routed(&self) -> &RoutedForward {
        &self.routed
    }
}

impl MomentumPair {
    /// The momentum encoder starts as an exact copy of `query`.
    pub fn new(query: Encoder, momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::config(format!("momentum {momentum} outside [0, 1]")));
        }
        Ok(Self {
            key: query.clone(),
            query,
            momentum,
        })
    }

    /// `θk ← m·θk + (1−m)·θq` for every parameter and running statistic.
    pub fn ema_update(&mut self) {
        let m = self.momentum;
        let Self { query, key, .. } = self;
        for (k, q) in key.tensors_mut().into_iter().zip(query.tensors()) {
            k.zip_mut_with(q, |kv, &qv| *kv = m * *kv + (1.0 - m) * qv);
        }
    }

    /// Run `query_slots` through the online encoder as one training batch
    /// and `key_slots` through the momentum encoder without gradient state.
    pub fn forward_routed(
        &mut self,
        views: &ViewMatrices,
        query_slots: &[ViewSlot],
        key_slots: &[ViewSlot],
    ) -> Result<RoutedForward> {
        if query_slots.is_empty() {
            return Err(Error::config("the online encoder needs at least one view slot"));
        }
        let rows = views.anchor_n.nrows();
        let stack = |slots: &[ViewSlot]| -> Result<Array2<f64>> {
            let parts: Vec<ArrayView2<'_, f64>> = slots.iter().map(|&s| views.slot(s).view()).collect();
            concatenate(Axis(0), &parts).map_err(|e| Error::shape(e.to_string()))
        };
        let split = |z: Array2<f64>, count: usize| -> Vec<Array2<f64>> {
            (0..count)
                .map(|i| z.slice(s![i * rows..(i + 1) * rows, ..]).to_owned())
                .collect()
        };
        let (zq, cache) = self.query.forward_train(&stack(query_slots)?)?;
        let key = if key_slots.is_empty() {
            Vec::new()
        } else {
            split(self.key.forward_batch_stats(&stack(key_slots)?)?, key_slots.len())
        };
        Ok(RoutedForward {
            query: split(zq, query_slots.len()),
            key,
            cache,
            rows,
        })
    }

    /// Anchor-normalized and counterpart-augmented views through the online
    /// encoder, the other two through the momentum encoder.
    pub fn forward_quadruple(&mut self, views: &ViewMatrices) -> Result<QuadrupleForward> {
        use ViewSlot::*;
        let routed = self.forward_routed(views, &[AnchorFirst, CounterpartSecond], &[AnchorSecond, CounterpartFirst])?;
        Ok(QuadrupleForward {
            anchor_n: routed.query[0].clone(),
            counterpart_a: routed.query[1].clone(),
            anchor_a: routed.key[0].clone(),
            counterpart_n: routed.key[1].clone(),
            routed,
        })
    }

    /// Online-encoder parameter gradients given one gradient per query output.
    pub fn backward(&self, routed: &RoutedForward, query_grads: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        if query_grads.len() != routed.query.len()
            || query_grads.iter().any(|g| g.nrows() != routed.rows)
        {
            return Err(Error::shape("one gradient block per online output is required"));
        }
        let views: Vec<ArrayView2<'_, f64>> = query_grads.iter().map(|g| g.view()).collect();
        let g = concatenate(Axis(0), &views).map_err(|e| Error::shape(e.to_string()))?;
        Ok(self.query.backward(&routed.cache, g))
    }
}
