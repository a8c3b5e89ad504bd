//! Gaussian-cluster image data with a long-tailed class profile.
//!
//! Every class owns a smooth random center image (coarse Gaussian noise
//! upsampled bilinearly and scaled to RMS `cluster_separation`); samples are
//! the center plus isotropic pixel noise, lifted by a constant `background`
//! level and multiplied by a per-image exposure gain drawn uniformly from
//! `[1 - exposure_spread, 1 + exposure_spread]`. Centers, training samples and test
//! samples come from separate ChaCha streams of the same seed, so the test
//! split does not depend on the training profile.

use ndarray::{Array3, Array4, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use super::profile::{build_exponential_counts, ClassCountProfile};
use crate::error::{Error, Result};
use crate::image::resize_bilinear;

const CENTER_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLtConfig {
    pub num_classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub cluster_separation: f64,
    pub within_cluster_std: f64,
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub exposure_spread: f64,
    pub r: f64,
    pub n_max: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticLtConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            channels: 3,
            height: 8,
            width: 8,
            cluster_separation: 1.0,
            within_cluster_std: 1.0,
            background: 0.0,
            exposure_spread: 0.0,
            r: 0.01,
            n_max: 500,
            test_per_class: 100,
            seed: 0,
        }
    }
}

impl SyntheticLtConfig {
    pub fn feature_dim(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("synthetic data needs at least 2 classes"));
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::config("synthetic image shape must be non-empty"));
        }
        if !(self.cluster_separation >= 0.0 && self.cluster_separation.is_finite()) {
            return Err(Error::config("cluster_separation must be a nonnegative real"));
        }
        if !(self.within_cluster_std > 0.0 && self.within_cluster_std.is_finite()) {
            return Err(Error::config("within_cluster_std must be positive"));
        }
        if !self.background.is_finite() {
            return Err(Error::config("background must be finite"));
        }
        if !(0.0..1.0).contains(&self.exposure_spread) {
            return Err(Error::config("exposure_spread must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<ClassCountProfile> {
        build_exponential_counts(self.n_max, self.num_classes, self.r)
    }
}

/// Generator holding the class centers.
#[derive(Debug, Clone)]
pub struct SyntheticLt {
    config: SyntheticLtConfig,
    centers: Vec<Array3<f64>>,
}

impl SyntheticLt {
    pub fn new(config: SyntheticLtConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, CENTER_STREAM);
        let (c, h, w) = (config.channels, config.height, config.width);
        let (ch, cw) = (h.div_ceil(2), w.div_ceil(2));
        let centers = (0..config.num_classes)
            .map(|_| {
                let coarse = Array3::from_shape_simple_fn((c, ch, cw), || {
                    StandardNormal.sample(&mut rng)
                });
                let fine = resize_bilinear(coarse.view(), h, w);
                let rms = (fine.mapv(|v| v * v).mean().unwrap_or(0.0)).sqrt();
                if rms > 0.0 {
                    fine * (config.cluster_separation / rms)
                } else {
                    fine
                }
            })
            .collect();
        Ok(Self { config, centers })
    }

    pub fn config(&self) -> &SyntheticLtConfig {
        &self.config
    }

    pub fn centers(&self) -> &[Array3<f64>] {
        &self.centers
    }

    /// Long-tailed training split following the exponential profile.
    pub fn train(&self) -> Result<LabeledDataset> {
        let profile = self.config.profile()?;
        self.sample(profile.counts(), TRAIN_STREAM)
    }

    /// Balanced split with `test_per_class` samples per class.
    pub fn test(&self) -> Result<LabeledDataset> {
        let counts = vec![self.config.test_per_class; self.config.num_classes];
        self.sample(&counts, TEST_STREAM)
    }

    fn sample(&self, counts: &[usize], stream_id: u64) -> Result<LabeledDataset> {
        let mut rng = stream(self.config.seed, stream_id);
        let (c, h, w) = (self.config.channels, self.config.height, self.config.width);
        let total: usize = counts.iter().sum();
        let mut images = Array4::zeros((total, c, h, w));
        let mut labels = Vec::with_capacity(total);
        let std = self.config.within_cluster_std;
        let bg = self.config.background;
        let spread = self.config.exposure_spread;
        let mut row = 0;
        for (class, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let gain = if spread > 0.0 {
                    rng.gen_range(1.0 - spread..1.0 + spread)
                } else {
                    1.0
                };
                let mut img = images.index_axis_mut(Axis(0), row);
                img.zip_mut_with(&self.centers[class], |px, &center| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *px = gain * (bg + center + std * z);
                });
                labels.push(class);
                row += 1;
            }
        }
        LabeledDataset::new(images, labels, self.config.num_classes)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Long-tailed training split for `config`.
pub fn generate_synthetic_lt(config: &SyntheticLtConfig) -> Result<LabeledDataset> {
    SyntheticLt::new(config.clone())?.train()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(num_classes: usize, r: f64, n_max: usize) -> SyntheticLtConfig {
        SyntheticLtConfig {
            num_classes,
            channels: 1,
            height: 2,
            width: 2,
            r,
            n_max,
            test_per_class: 3,
            ..SyntheticLtConfig::default()
        }
    }

    #[test]
    fn balanced_two_class() {
        let ds = generate_synthetic_lt(&small(2, 1.0, 10)).unwrap();
        assert_eq!(ds.len(), 20);
        assert_eq!(ds.class_counts(), vec![10, 10]);
    }

    #[test]
    fn long_tailed_profile_delegates() {
        let cfg = small(10, 0.01, 500);
        let ds = generate_synthetic_lt(&cfg).unwrap();
        let expected = build_exponential_counts(500, 10, 0.01).unwrap();
        assert_eq!(ds.class_counts(), expected.counts());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = small(3, 0.5, 20);
        let a = generate_synthetic_lt(&cfg).unwrap();
        let b = generate_synthetic_lt(&cfg).unwrap();
        assert_eq!(a, b);
        let other = SyntheticLtConfig { seed: 1, ..cfg };
        assert_ne!(a.images, generate_synthetic_lt(&other).unwrap().images);
    }

    #[test]
    fn centers_have_requested_rms() {
        let cfg = SyntheticLtConfig {
            cluster_separation: 2.5,
            ..SyntheticLtConfig::default()
        };
        let gen = SyntheticLt::new(cfg).unwrap();
        for c in gen.centers() {
            let rms = c.mapv(|v| v * v).mean().unwrap().sqrt();
            assert!((rms - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_separation_collapses_centers() {
        let cfg = SyntheticLtConfig {
            cluster_separation: 0.0,
            ..SyntheticLtConfig::default()
        };
        let gen = SyntheticLt::new(cfg).unwrap();
        assert!(gen.centers().iter().all(|c| c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn exposure_scales_whole_images() {
        let flat = SyntheticLtConfig {
            within_cluster_std: 1e-300,
            cluster_separation: 0.0,
            background: 2.0,
            exposure_spread: 0.5,
            ..small(2, 1.0, 30)
        };
        let ds = generate_synthetic_lt(&flat).unwrap();
        for img in ds.images.outer_iter() {
            let first = img[[0, 0, 0]];
            assert!((1.0..3.0).contains(&first));
            assert!(img.iter().all(|&v| (v - first).abs() < 1e-12));
        }
        let bad = SyntheticLtConfig {
            exposure_spread: 1.0,
            ..flat
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn test_split_is_balanced_and_independent_of_profile() {
        let a = SyntheticLt::new(small(4, 0.1, 50)).unwrap().test().unwrap();
        let b = SyntheticLt::new(small(4, 0.5, 80)).unwrap().test().unwrap();
        assert_eq!(a.class_counts(), vec![3; 4]);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small(2, 1.0, 10);
        cfg.within_cluster_std = 0.0;
        assert!(generate_synthetic_lt(&cfg).is_err());
        cfg.within_cluster_std = 1.0;
        cfg.num_classes = 1;
        assert!(generate_synthetic_lt(&cfg).is_err());
    }
}
