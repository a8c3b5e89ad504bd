//! Labeled image collections, stratified subsampling and manifests.

use std::path::Path;

use ndarray::{Array2, Array4, ArrayView3, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::profile::{ClassCountProfile, DistributionKind};
use crate::error::{Error, Result};

/// Images `(n, c, h, w)` with integer labels and stable sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Array4<f64>,
    pub labels: Vec<usize>,
    pub ids: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Array4<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let ids = (0..labels.len()).collect();
        Self::with_ids(images, labels, ids, num_classes)
    }

    pub fn with_ids(
        images: Array4<f64>,
        labels: Vec<usize>,
        ids: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if images.len_of(Axis(0)) != labels.len() || ids.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} images, {} labels, {} ids",
                images.len_of(Axis(0)),
                labels.len(),
                ids.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Malformed(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            images,
            labels,
            ids,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        let (_, c, h, w) = self.images.dim();
        (c, h, w)
    }

    pub fn image(&self, i: usize) -> ArrayView3<'_, f64> {
        self.images.index_axis(Axis(0), i)
    }

    /// Images flattened to rows.
    pub fn flat(&self) -> Array2<f64> {
        let (n, c, h, w) = self.images.dim();
        self.images
            .as_standard_layout()
            .into_owned()
            .into_shape((n, c * h * w))
            .expect("standard layout reshape")
    }

    /// Counts indexed by class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Profile of the realized counts; fails if counts are not head-first.
    pub fn profile(&self, kind: DistributionKind) -> Result<ClassCountProfile> {
        ClassCountProfile::new(self.class_counts(), kind)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}

/// Subsampling ratio and the seed that drives the per-class draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub s: f64,
    pub seed: u64,
}

/// Keep `round(s * n_k)` uniformly drawn samples of every class. Surviving
/// samples keep their original relative order.
pub fn stratified_subsample(dataset: &LabeledDataset, spec: SubsampleSpec) -> Result<LabeledDataset> {
    if !(spec.s > 0.0 && spec.s <= 1.0) {
        return Err(Error::config(format!("subsampling ratio must be in (0, 1], got {}", spec.s)));
    }
    let by_class = dataset.indices_by_class();
    let targets: Vec<usize> = by_class
        .iter()
        .map(|members| (spec.s * members.len() as f64).round_ties_even() as usize)
        .collect();
    for (class, (&t, members)) in targets.iter().zip(&by_class).enumerate() {
        if t == 0 && !members.is_empty() {
            return Err(Error::EmptyClass {
                class,
                detail: format!("s={} keeps none of {} samples", spec.s, members.len()),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    take_per_class(dataset, &by_class, &targets, &mut rng)
}

/// Cut a (typically balanced) dataset down to the given per-class counts,
/// drawing members uniformly under `seed`.
pub fn apply_profile(
    dataset: &LabeledDataset,
    profile: &ClassCountProfile,
    seed: u64,
) -> Result<LabeledDataset> {
    if profile.num_classes() != dataset.num_classes {
        return Err(Error::shape(format!(
            "profile has {} classes, dataset {}",
            profile.num_classes(),
            dataset.num_classes
        )));
    }
    let by_class = dataset.indices_by_class();
    for (class, (&want, members)) in profile.counts().iter().zip(&by_class).enumerate() {
        if want > members.len() {
            return Err(Error::config(format!(
                "class {class} needs {want} samples but only {} exist",
                members.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    take_per_class(dataset, &by_class, profile.counts(), &mut rng)
}

fn take_per_class(
    dataset: &LabeledDataset,
    by_class: &[Vec<usize>],
    targets: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<LabeledDataset> {
    let mut keep = Vec::with_capacity(targets.iter().sum());
    for (members, &t) in by_class.iter().zip(targets) {
        let mut picked: Vec<usize> = index::sample(rng, members.len(), t)
            .into_iter()
            .map(|j| members[j])
            .collect();
        keep.append(&mut picked);
    }
    keep.sort_unstable();
    Ok(dataset.select(&keep))
}

/// One row of a dataset manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: usize,
    pub label: usize,
}

/// Inspectable record of a built long-tailed dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: String,
    pub profile: ClassCountProfile,
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn from_dataset(
        source: impl Into<String>,
        dataset: &LabeledDataset,
        kind: DistributionKind,
    ) -> Result<Self> {
        Ok(Self {
            source: source.into(),
            profile: dataset.profile(kind)?,
            samples: dataset
                .ids
                .iter()
                .zip(&dataset.labels)
                .map(|(&id, &label)| ManifestEntry { id, label })
                .collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let manifest: Self = serde_json::from_str(&text)?;
        let mut counts = vec![0usize; manifest.profile.num_classes()];
        for e in &manifest.samples {
            if e.label >= counts.len() {
                return Err(Error::Malformed(format!("manifest label {} out of range", e.label)));
            }
            counts[e.label] += 1;
        }
        if counts != manifest.profile.counts() {
            return Err(Error::Malformed("manifest samples disagree with profile".into()));
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longtail::profile::build_exponential_counts;

    fn toy(counts: &[usize]) -> LabeledDataset {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let n = labels.len();
        let images = Array4::from_shape_fn((n, 1, 1, 2), |(i, _, _, x)| (i * 2 + x) as f64);
        LabeledDataset::new(images, labels, counts.len()).unwrap()
    }

    #[test]
    fn full_ratio_is_identity() {
        let ds = toy(&[7, 4, 2]);
        let out = stratified_subsample(&ds, SubsampleSpec { s: 1.0, seed: 3 }).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn half_ratio_is_proportional() {
        let ds = toy(&[100, 10]);
        let out = stratified_subsample(&ds, SubsampleSpec { s: 0.5, seed: 9 }).unwrap();
        assert_eq!(out.class_counts(), vec![50, 5]);
        // images travel with their ids
        for (i, &id) in out.ids.iter().enumerate() {
            assert_eq!(out.images[[i, 0, 0, 0]], (id * 2) as f64);
        }
    }

    #[test]
    fn eighth_of_exponential_profile() {
        let profile = build_exponential_counts(5000, 10, 0.01).unwrap();
        let ds = toy(profile.counts());
        let out = stratified_subsample(&ds, SubsampleSpec { s: 0.125, seed: 1 }).unwrap();
        let expected: Vec<usize> = profile
            .counts()
            .iter()
            .map(|&n| (n as f64 / 8.0).round_ties_even() as usize)
            .collect();
        assert_eq!(out.class_counts(), expected);
    }

    #[test]
    fn subsample_rejects_emptied_class() {
        let ds = toy(&[10, 1]);
        let err = stratified_subsample(&ds, SubsampleSpec { s: 0.2, seed: 0 }).unwrap_err();
        assert!(matches!(err, Error::EmptyClass { class: 1, .. }));
        assert!(stratified_subsample(&ds, SubsampleSpec { s: 0.0, seed: 0 }).is_err());
    }

    #[test]
    fn subsample_is_seeded() {
        let ds = toy(&[40, 20, 10]);
        let spec = SubsampleSpec { s: 0.5, seed: 11 };
        let a = stratified_subsample(&ds, spec).unwrap();
        let b = stratified_subsample(&ds, spec).unwrap();
        assert_eq!(a, b);
        let c = stratified_subsample(&ds, SubsampleSpec { s: 0.5, seed: 12 }).unwrap();
        assert_ne!(a.ids, c.ids);
    }

    #[test]
    fn manifest_round_trip() {
        let ds = toy(&[3, 2, 1]);
        let m = DatasetManifest::from_dataset("toy", &ds, DistributionKind::Exponential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap(), m);
    }

    #[test]
    fn dataset_rejects_out_of_range_label() {
        let images = Array4::zeros((2, 1, 1, 1));
        assert!(LabeledDataset::new(images, vec![0, 3], 2).is_err());
    }
}
