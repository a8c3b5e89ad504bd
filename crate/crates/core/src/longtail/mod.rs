//! Long-tailed dataset construction: count profiles, stratified subsets and
//! data sources.

mod cifar;
mod dataset;
mod profile;
mod synthetic;

pub use cifar::{decode_records, load_split, CifarVariant};
pub use dataset::{
    apply_profile, stratified_subsample, DatasetManifest, LabeledDataset, ManifestEntry,
    SubsampleSpec,
};
pub use profile::{
    build_exponential_counts, build_pareto_counts, pareto_exponent, ClassCountProfile,
    DistributionKind,
};
pub use synthetic::{generate_synthetic_lt, SyntheticLt, SyntheticLtConfig};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Where training/test images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticLtConfig),
    /// CIFAR binary files cut to an exponential profile with ratio `r`.
    Cifar10 { dir: PathBuf, r: f64, n_max: usize },
    Cifar100 { dir: PathBuf, r: f64, n_max: usize },
}

/// A pair of train/test splits.
pub trait DatasetSource {
    fn train(&self) -> Result<LabeledDataset>;
    fn test(&self) -> Result<LabeledDataset>;
}

impl DatasetSource for SyntheticLt {
    fn train(&self) -> Result<LabeledDataset> {
        SyntheticLt::train(self)
    }

    fn test(&self) -> Result<LabeledDataset> {
        SyntheticLt::test(self)
    }
}

struct CifarSource {
    dir: PathBuf,
    variant: CifarVariant,
    r: f64,
    n_max: usize,
    seed: u64,
}

impl DatasetSource for CifarSource {
    fn train(&self) -> Result<LabeledDataset> {
        let full = load_split(&self.dir, self.variant, true)?;
        let profile = build_exponential_counts(self.n_max, self.variant.num_classes(), self.r)?;
        apply_profile(&full, &profile, self.seed)
    }

    fn test(&self) -> Result<LabeledDataset> {
        load_split(&self.dir, self.variant, false)
    }
}

impl DatasetSpec {
    pub fn source(&self, seed: u64) -> Result<Box<dyn DatasetSource>> {
        Ok(match self {
            DatasetSpec::Synthetic(cfg) => Box::new(SyntheticLt::new(cfg.clone())?),
            DatasetSpec::Cifar10 { dir, r, n_max } => Box::new(CifarSource {
                dir: dir.clone(),
                variant: CifarVariant::Cifar10,
                r: *r,
                n_max: *n_max,
                seed,
            }),
            DatasetSpec::Cifar100 { dir, r, n_max } => Box::new(CifarSource {
                dir: dir.clone(),
                variant: CifarVariant::Cifar100,
                r: *r,
                n_max: *n_max,
                seed,
            }),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Synthetic(_) => "synthetic",
            DatasetSpec::Cifar10 { .. } => "cifar10-lt",
            DatasetSpec::Cifar100 { .. } => "cifar100-lt",
        }
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        match self {
            DatasetSpec::Synthetic(c) => (c.channels, c.height, c.width),
            _ => (3, 32, 32),
        }
    }
}
