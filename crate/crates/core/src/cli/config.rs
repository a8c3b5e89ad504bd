//! Run configuration, stored as TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{BackboneKind, EncoderSpec, FeatureSource};
use crate::error::{Error, Result};
use crate::evaluation::LinearProbeConfig;
use crate::longtail::{DatasetSpec, SyntheticLtConfig};
use crate::objective::{FusionOp, LossConfig, PairingOption};
use crate::views::{AugmentationPolicy, ViewScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DatasetSpec,
    /// Stratified subsampling ratio applied to the training split.
    pub subsample: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Fused anchor/counterpart pairs with similarity thresholding.
    Mttv,
    /// Two views of the same image, unthresholded.
    NtXent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub option: PairingOption,
    pub views: ViewScheme,
    pub loss: LossConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub epochs: usize,
    pub warmup_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub knn_k: usize,
    /// Probe every this many epochs (0 disables periodic probes; the final
    /// epoch is always probed).
    pub knn_every: usize,
    pub features: FeatureSource,
    pub linear: LinearProbeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub batch_size: usize,
    pub ema_momentum: f64,
    /// Save a checkpoint every this many epochs (the last epoch is always saved).
    pub checkpoint_every: usize,
    pub data: DataConfig,
    pub encoder: EncoderSpec,
    pub objective: ObjectiveConfig,
    pub augmentation: AugmentationPolicy,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
    pub evaluation: EvalConfig,
}

impl RunConfig {
    /// Desk-scale synthetic long-tail preset used by the tests and as the
    /// command-line default.
    pub fn toy() -> Self {
        // harder than the generator defaults: closer classes plus a lighting
        // nuisance that raw pixels cannot see past
        let data = SyntheticLtConfig {
            cluster_separation: 0.45,
            background: 4.0,
            exposure_spread: 0.4,
            ..SyntheticLtConfig::default()
        };
        let input_dim = data.feature_dim();
        Self {
            seed: 0,
            deterministic: true,
            batch_size: 128,
            ema_momentum: 0.9,
            checkpoint_every: 10,
            data: DataConfig {
                source: DatasetSpec::Synthetic(data),
                subsample: 1.0,
            },
            encoder: EncoderSpec {
                backbone: BackboneKind::SmallMlp,
                input_dim,
                hidden_dim: 128,
                embedding_dim: 64,
                projection_dim: 64,
                output_dim: 32,
            },
            objective: ObjectiveConfig {
                kind: ObjectiveKind::Mttv,
                option: PairingOption::Cross,
                views: ViewScheme::NormalizedAugmented,
                loss: LossConfig {
                    temperature: 0.2,
                    lambda_low: 0.1,
                    lambda_high: 0.9,
                    fusion: FusionOp::Sum,
                },
            },
            augmentation: AugmentationPolicy::standard(),
            optimizer: OptimizerConfig {
                kind: OptimizerKind::Sgd,
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 1e-4,
            },
            schedule: ScheduleConfig {
                epochs: 200,
                warmup_fraction: 0.1,
            },
            evaluation: EvalConfig {
                knn_k: 20,
                knn_every: 10,
                features: FeatureSource::Backbone,
                linear: LinearProbeConfig::default(),
            },
        }
    }

    /// Two-view NT-Xent baseline with the same data, encoder and schedule.
    pub fn as_nt_xent(&self, views: ViewScheme) -> Self {
        let mut c = self.clone();
        c.objective.kind = ObjectiveKind::NtXent;
        c.objective.views = views;
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.ema_momentum) {
            return Err(Error::config("ema_momentum must lie in [0, 1]"));
        }
        if !(self.data.subsample > 0.0 && self.data.subsample <= 1.0) {
            return Err(Error::config("data.subsample must lie in (0, 1]"));
        }
        if let DatasetSpec::Synthetic(s) = &self.data.source {
            s.validate()?;
        }
        self.encoder.validate()?;
        let (c, h, w) = self.data.source.image_shape();
        if self.encoder.input_dim != c * h * w {
            return Err(Error::config(format!(
                "encoder.input_dim {} does not match image size {c}x{h}x{w}",
                self.encoder.input_dim
            )));
        }
        self.objective.loss.validate()?;
        self.augmentation.validate()?;
        let o = &self.optimizer;
        if !(o.lr.is_finite() && o.lr >= 0.0) {
            return Err(Error::config("optimizer.lr must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return Err(Error::config("optimizer.momentum must lie in [0, 1)"));
        }
        if !(o.weight_decay.is_finite() && o.weight_decay >= 0.0) {
            return Err(Error::config("optimizer.weight_decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.schedule.warmup_fraction) {
            return Err(Error::config("schedule.warmup_fraction must lie in [0, 1)"));
        }
        if self.evaluation.knn_k == 0 {
            return Err(Error::config("evaluation.knn_k must be positive"));
        }
        self.evaluation.linear.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_preset_round_trips_through_toml() {
        let cfg = RunConfig::toy();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn validation_failures_are_config_errors() {
        let mut cfg = RunConfig::toy();
        cfg.objective.loss.lambda_low = 0.95;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);

        let mut cfg = RunConfig::toy();
        cfg.encoder.input_dim += 1;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::toy();
        cfg.encoder.backbone = BackboneKind::Resnet50;
        assert!(cfg.validate().is_err());

        let text = RunConfig::toy().to_toml_string().unwrap().replace("seed = 0", "seed = 0\nsede = 1");
        assert_eq!(RunConfig::from_toml_str(&text).unwrap_err().exit_code(), 2);
    }
}
