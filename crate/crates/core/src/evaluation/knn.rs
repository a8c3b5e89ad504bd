use ndarray::{Array2, ArrayView2};

use super::groups::{GroupPartition, GroupReport};
use crate::error::{Error, Result};
use crate::objective::unit_rows;

/// Labeled reference features with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl FeatureBank {
    /// Normalizes every row; zero rows are rejected.
    pub fn new(features: ArrayView2<'_, f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::shape(format!("{} rows, {} labels", features.nrows(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::shape(format!("label {bad} outside {num_classes} classes")));
        }
        let (features, _) = unit_rows(features)?;
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Classify each query row by majority vote over its `k` most
/// cosine-similar bank rows. Vote ties go to the class with the larger summed
/// similarity, then to the smaller class id; neighbor ranking ties go to the
/// smaller bank index.
pub fn knn_predict(bank: &FeatureBank, queries: ArrayView2<'_, f64>, k: usize) -> Result<Vec<usize>> {
    if bank.is_empty() {
        return Err(Error::config("empty feature bank"));
    }
    if k == 0 || k > bank.len() {
        return Err(Error::config(format!("k={k} must be in 1..={}", bank.len())));
    }
    if queries.ncols() != bank.features.ncols() {
        return Err(Error::shape(format!(
            "query dim {} vs bank dim {}",
            queries.ncols(),
            bank.features.ncols()
        )));
    }
    if queries.nrows() == 0 {
        return Ok(Vec::new());
    }
    let (unit, _) = unit_rows(queries)?;
    let sims = unit.dot(&bank.features.t());
    let mut order: Vec<usize> = Vec::with_capacity(bank.len());
    let mut votes = vec![0usize; bank.num_classes];
    let mut mass = vec![0f64; bank.num_classes];
    let mut out = Vec::with_capacity(sims.nrows());
    for row in sims.rows() {
        order.clear();
        order.extend(0..bank.len());
        let cmp = |a: &usize, b: &usize| row[*b].total_cmp(&row[*a]).then(a.cmp(b));
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
        }
        votes.fill(0);
        mass.fill(0.0);
        let mut top = order[..k].to_vec();
        top.sort_unstable_by(cmp);
        for &j in &top {
            votes[bank.labels[j]] += 1;
            mass[bank.labels[j]] += row[j];
        }
        let best = (0..bank.num_classes)
            .max_by(|&a, &b| {
                votes[a]
                    .cmp(&votes[b])
                    .then(mass[a].total_cmp(&mass[b]))
                    .then(b.cmp(&a))
            })
            .expect("at least one class");
        out.push(best);
    }
    Ok(out)
}

pub fn knn_evaluate(
    bank: &FeatureBank,
    test_features: ArrayView2<'_, f64>,
    test_labels: &[usize],
    k: usize,
    groups: &GroupPartition,
) -> Result<GroupReport> {
    let predictions = knn_predict(bank, test_features, k)?;
    GroupReport::from_predictions(&predictions, test_labels, groups)
}
