use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::groups::{GroupPartition, GroupReport};
use crate::encoder::{Encoder, FeatureSource, Sgd};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbeConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for LinearProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.005,
            batch_size: 64,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl LinearProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("probe lr must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("probe batch_size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("probe momentum must be in [0, 1)"));
        }
        Ok(())
    }
}

/// A trained affine classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl LinearClassifier {
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Arg-max class per row; ties go to the smaller class id.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        self.logits(x)
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                    .0
            })
            .collect()
    }
}

/// Row-wise softmax minus one-hot targets, divided by the batch size: the
/// gradient of mean cross-entropy with respect to the logits.
fn cross_entropy_grad(logits: &Array2<f64>, labels: &[usize]) -> Array2<f64> {
    let n = logits.nrows() as f64;
    let mut g = logits.clone();
    for (mut row, &y) in g.rows_mut().into_iter().zip(labels) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
        row[y] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    g
}

/// Train a zero-initialized affine layer with cross-entropy, SGD and a cosine
/// learning-rate decay over epochs (no warm-up).
pub fn train_linear_classifier(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    cfg: &LinearProbeConfig,
) -> Result<LinearClassifier> {
    cfg.validate()?;
    if features.nrows() != labels.len() {
        return Err(Error::shape(format!("{} rows, {} labels", features.nrows(), labels.len())));
    }
    if labels.iter().any(|&y| y >= num_classes) {
        return Err(Error::shape("label outside class range"));
    }
    let mut clf = LinearClassifier {
        weight: Array2::zeros((features.ncols(), num_classes)),
        bias: Array2::zeros((1, num_classes)),
    };
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    for epoch in 0..cfg.epochs {
        sgd.lr = cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos());
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = features.select(Axis(0), chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let g = cross_entropy_grad(&clf.logits(x.view()), &y);
            let grads = [x.t().dot(&g), g.sum_axis(Axis(0)).insert_axis(Axis(0))];
            sgd.step(vec![&mut clf.weight, &mut clf.bias], &grads)?;
        }
    }
    Ok(clf)
}

/// Linear evaluation on precomputed features.
#[allow(clippy::too_many_arguments)]
pub fn linear_probe_features(
    train_features: ArrayView2<'_, f64>,
    train_labels: &[usize],
    test_features: ArrayView2<'_, f64>,
    test_labels: &[usize],
    num_classes: usize,
    cfg: &LinearProbeConfig,
    groups: &GroupPartition,
) -> Result<GroupReport> {
    let clf = train_linear_classifier(train_features, train_labels, num_classes, cfg)?;
    GroupReport::from_predictions(&clf.predict(test_features), test_labels, groups)
}

/// Linear evaluation of a frozen encoder. Fails if the encoder's parameter
/// fingerprint changes while probing.
#[allow(clippy::too_many_arguments)]
pub fn linear_probe(
    encoder: &Encoder,
    source: FeatureSource,
    train_inputs: &Array2<f64>,
    train_labels: &[usize],
    test_inputs: &Array2<f64>,
    test_labels: &[usize],
    num_classes: usize,
    cfg: &LinearProbeConfig,
    groups: &GroupPartition,
) -> Result<GroupReport> {
    let before = encoder.fingerprint();
    let train = encoder.probe_features(train_inputs, source)?;
    let test = encoder.probe_features(test_inputs, source)?;
    let report = linear_probe_features(
        train.view(),
        train_labels,
        test.view(),
        test_labels,
        num_classes,
        cfg,
        groups,
    )?;
    if encoder.fingerprint() != before {
        return Err(Error::Numeric("encoder parameters changed during linear probe".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::partition_by_counts;
    use ndarray::array;

    #[test]
    fn separable_two_class_features() {
        let x = array![[2.0, 0.1], [1.5, -0.2], [3.0, 0.3], [-2.0, 0.0], [-1.0, 0.4], [-2.5, -0.3]];
        let y = [0, 0, 0, 1, 1, 1];
        let cfg = LinearProbeConfig {
            epochs: 50,
            lr: 0.1,
            batch_size: 2,
            ..Default::default()
        };
        let clf = train_linear_classifier(x.view(), &y, 2, &cfg).unwrap();
        assert_eq!(clf.predict(x.view()), y.to_vec());
        assert_eq!(clf.predict(array![[4.0, 0.0], [-4.0, 0.0]].view()), vec![0, 1]);
    }

    #[test]
    fn zero_epochs_predicts_one_class() {
        let x = array![[1.0], [2.0], [3.0]];
        let y = [0, 1, 2];
        let cfg = LinearProbeConfig {
            epochs: 0,
            ..Default::default()
        };
        let groups = partition_by_counts(&[1, 1, 1]).unwrap();
        let r = linear_probe_features(x.view(), &y, x.view(), &y, 3, &cfg, &groups).unwrap();
        assert!((r.overall_acc - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = array![[0.3, -1.2, 2.0], [0.0, 0.5, -0.5]];
        let y = [2, 0];
        let loss = |l: &Array2<f64>| {
            l.rows()
                .into_iter()
                .zip(&y)
                .map(|(r, &t)| r.mapv(f64::exp).sum().ln() - r[t])
                .sum::<f64>()
                / 2.0
        };
        let g = cross_entropy_grad(&logits, &y);
        for i in 0..2 {
            for j in 0..3 {
                let mut p = logits.clone();
                p[[i, j]] += 1e-6;
                let mut m = logits.clone();
                m[[i, j]] -= 1e-6;
                assert!(((loss(&p) - loss(&m)) / 2e-6 - g[[i, j]]).abs() < 1e-8);
            }
        }
    }
}
