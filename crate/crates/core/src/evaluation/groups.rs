use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::longtail::ClassCountProfile;

/// Frequent / medium / rare class sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub frequent: Vec<usize>,
    pub medium: Vec<usize>,
    pub rare: Vec<usize>,
}

impl GroupPartition {
    pub fn num_classes(&self) -> usize {
        self.frequent.len() + self.medium.len() + self.rare.len()
    }

    /// Group index (0 frequent, 1 medium, 2 rare) of every class id.
    pub fn class_groups(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.num_classes()];
        for (g, set) in [&self.frequent, &self.medium, &self.rare].into_iter().enumerate() {
            for &c in set {
                out[c] = g;
            }
        }
        out
    }
}

pub fn group_partition(profile: &ClassCountProfile) -> Result<GroupPartition> {
    partition_by_counts(profile.counts())
}

/// Rank classes by count (descending, stable on ties) and cut the ranking into
/// three contiguous groups whose sizes differ by at most one, earlier groups
/// taking the remainder.
pub fn partition_by_counts(counts: &[usize]) -> Result<GroupPartition> {
    let k = counts.len();
    if k < 3 {
        return Err(Error::config(format!("group split needs at least 3 classes, got {k}")));
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]));
    let sizes: Vec<usize> = (0..3).map(|g| k / 3 + usize::from(g < k % 3)).collect();
    let medium_start = sizes[0];
    let rare_start = sizes[0] + sizes[1];
    Ok(GroupPartition {
        frequent: order[..medium_start].to_vec(),
        medium: order[medium_start..rare_start].to_vec(),
        rare: order[rare_start..].to_vec(),
    })
}

/// Per-class hit counts on a test set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub correct: usize,
    pub total: usize,
}

/// Accuracy overall, per frequency group, and the spread across groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub overall_acc: f64,
    pub frequent_acc: f64,
    pub medium_acc: f64,
    pub rare_acc: f64,
    /// Population standard deviation of the three group accuracies.
    pub std: f64,
    pub per_class: Vec<ClassTally>,
}

fn ratio(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

impl GroupReport {
    /// Score `predictions` against `labels`. A group without test samples
    /// scores 0.
    pub fn from_predictions(predictions: &[usize], labels: &[usize], groups: &GroupPartition) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let k = groups.num_classes();
        let mut per_class = vec![ClassTally { correct: 0, total: 0 }; k];
        for (&p, &y) in predictions.iter().zip(labels) {
            let tally = per_class
                .get_mut(y)
                .ok_or_else(|| Error::shape(format!("label {y} outside {k} classes")))?;
            tally.total += 1;
            tally.correct += usize::from(p == y);
        }
        let group_acc = |set: &[usize]| {
            let (c, t) = set
                .iter()
                .fold((0, 0), |(c, t), &i| (c + per_class[i].correct, t + per_class[i].total));
            ratio(c, t)
        };
        let (frequent_acc, medium_acc, rare_acc) =
            (group_acc(&groups.frequent), group_acc(&groups.medium), group_acc(&groups.rare));
        let correct: usize = per_class.iter().map(|t| t.correct).sum();
        Ok(Self {
            overall_acc: ratio(correct, labels.len()),
            frequent_acc,
            medium_acc,
            rare_acc,
            std: population_std(&[frequent_acc, medium_acc, rare_acc]),
            per_class,
        })
    }

    pub fn class_accuracies(&self) -> Vec<f64> {
        self.per_class.iter().map(|t| ratio(t.correct, t.total)).collect()
    }
}

/// Mean and population standard deviation of a metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let mean = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        Self {
            mean,
            std: population_std(values),
        }
    }
}

/// Field-wise aggregate of several reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: usize,
    pub overall_acc: Aggregate,
    pub frequent_acc: Aggregate,
    pub medium_acc: Aggregate,
    pub rare_acc: Aggregate,
    pub std: Aggregate,
}

impl ReportSummary {
    pub fn of(reports: &[GroupReport]) -> Self {
        let agg = |f: fn(&GroupReport) -> f64| Aggregate::of(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            runs: reports.len(),
            overall_acc: agg(|r| r.overall_acc),
            frequent_acc: agg(|r| r.frequent_acc),
            medium_acc: agg(|r| r.medium_acc),
            rare_acc: agg(|r| r.rare_acc),
            std: agg(|r| r.std),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longtail::DistributionKind;

    #[test]
    fn tercile_sizes() {
        let sizes = |k: usize| {
            let p = partition_by_counts(&vec![1; k]).unwrap();
            (p.frequent.len(), p.medium.len(), p.rare.len())
        };
        assert_eq!(sizes(10), (4, 3, 3));
        assert_eq!(sizes(100), (34, 33, 33));
        assert_eq!(sizes(3), (1, 1, 1));
        assert_eq!(sizes(11), (4, 4, 3));
        assert!(partition_by_counts(&[5, 3]).is_err());
    }

    #[test]
    fn uniform_counts_split_by_index() {
        let p = partition_by_counts(&[7; 10]).unwrap();
        assert_eq!(p.frequent, vec![0, 1, 2, 3]);
        assert_eq!(p.medium, vec![4, 5, 6]);
        assert_eq!(p.rare, vec![7, 8, 9]);
    }

    #[test]
    fn unsorted_counts_ranked_descending() {
        let p = partition_by_counts(&[1, 9, 5, 9, 3, 2]).unwrap();
        assert_eq!(p.frequent, vec![1, 3]);
        assert_eq!(p.medium, vec![2, 4]);
        assert_eq!(p.rare, vec![5, 0]);
        let mut all: Vec<usize> = p.class_groups();
        all.sort();
        assert_eq!(all, vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn profile_partition() {
        let profile = ClassCountProfile::new(vec![50, 30, 20, 10, 5], DistributionKind::Exponential).unwrap();
        let p = group_partition(&profile).unwrap();
        assert_eq!((p.frequent, p.medium, p.rare), (vec![0, 1], vec![2, 3], vec![4]));
    }

    #[test]
    fn report_recombines_and_spreads() {
        let groups = partition_by_counts(&[3, 2, 1]).unwrap();
        let labels = [0, 0, 1, 1, 2, 2];
        let preds = [0, 0, 1, 0, 1, 1];
        let r = GroupReport::from_predictions(&preds, &labels, &groups).unwrap();
        assert_eq!((r.frequent_acc, r.medium_acc, r.rare_acc), (1.0, 0.5, 0.0));
        assert!((r.overall_acc - 0.5).abs() < 1e-15);
        assert!((r.std - (1.0f64 / 6.0).sqrt()).abs() < 1e-12);
        assert!(GroupReport::from_predictions(&[0], &[7], &groups).is_err());
    }

    #[test]
    fn population_std_matches_reported_spreads() {
        let s = population_std(&[87.30, 84.36, 80.40]);
        assert!((s - 2.82).abs() < 0.01, "{s}");
        let s = population_std(&[62.24, 56.75, 61.50]);
        assert!((s - 2.42).abs() < 0.015, "{s}");
    }
}
