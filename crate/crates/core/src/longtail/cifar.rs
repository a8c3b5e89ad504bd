//! Reader for the CIFAR binary distributions (`cifar-10-batches-bin` and
//! `cifar-100-binary`). Nothing is downloaded; point it at an unpacked copy.

use std::path::{Path, PathBuf};

use ndarray::Array4;

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};

const SIDE: usize = 32;
const PIXELS: usize = 3 * SIDE * SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    fn files(self, dir: &Path, train: bool) -> Vec<PathBuf> {
        match (self, train) {
            (CifarVariant::Cifar10, true) => (1..=5)
                .map(|i| dir.join(format!("data_batch_{i}.bin")))
                .collect(),
            (CifarVariant::Cifar10, false) => vec![dir.join("test_batch.bin")],
            (CifarVariant::Cifar100, true) => vec![dir.join("train.bin")],
            (CifarVariant::Cifar100, false) => vec![dir.join("test.bin")],
        }
    }
}

/// Decode raw CIFAR records into `[0, 1]`-scaled images. For CIFAR-100 the
/// fine label (second byte) is used.
pub fn decode_records(bytes: &[u8], variant: CifarVariant) -> Result<LabeledDataset> {
    let record = variant.label_bytes() + PIXELS;
    if !bytes.len().is_multiple_of(record) {
        return Err(Error::Malformed(format!(
            "{} bytes is not a whole number of {record}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / record;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * PIXELS);
    for chunk in bytes.chunks_exact(record) {
        labels.push(chunk[variant.label_bytes() - 1] as usize);
        pixels.extend(chunk[variant.label_bytes()..].iter().map(|&b| b as f64 / 255.0));
    }
    let images = Array4::from_shape_vec((n, 3, SIDE, SIDE), pixels)
        .map_err(|e| Error::shape(e.to_string()))?;
    LabeledDataset::new(images, labels, variant.num_classes())
}

pub fn load_split(dir: &Path, variant: CifarVariant, train: bool) -> Result<LabeledDataset> {
    let mut bytes = Vec::new();
    for file in variant.files(dir, train) {
        bytes.extend(std::fs::read(&file).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", file.display())))
        })?);
    }
    decode_records(&bytes, variant)
}
