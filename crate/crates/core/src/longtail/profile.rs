//! Per-class count profiles for long-tailed datasets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Exponential,
    Pareto,
    Uniform,
}

/// Sample counts per class, head first.
///
/// Counts are non-increasing across the class index and every class keeps at
/// least one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCountProfile {
    counts: Vec<usize>,
    kind: DistributionKind,
}

impl ClassCountProfile {
    pub fn new(counts: Vec<usize>, kind: DistributionKind) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::config("profile needs at least one class"));
        }
        if let Some(class) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass {
                class,
                detail: "profile counts must be positive".into(),
            });
        }
        if counts.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("profile counts must be non-increasing"));
        }
        Ok(Self { counts, kind })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Realized `min / max` ratio.
    pub fn imbalance_ratio(&self) -> f64 {
        let max = self.counts[0] as f64;
        let min = *self.counts.last().unwrap() as f64;
        min / max
    }

    /// Counts divided by the total.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

fn round_count(x: f64) -> usize {
    x.round_ties_even().max(0.0) as usize
}

/// `counts[k] = round(n_max * r^(k / (K - 1)))`, ties to even.
pub fn build_exponential_counts(
    n_max: usize,
    num_classes: usize,
    r: f64,
) -> Result<ClassCountProfile> {
    if n_max == 0 {
        return Err(Error::config("n_max must be at least 1"));
    }
    if num_classes < 2 {
        return Err(Error::config("exponential profile needs at least 2 classes"));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::config(format!("imbalance ratio must be in (0, 1], got {r}")));
    }
    let last = (num_classes - 1) as f64;
    let counts: Vec<usize> = (0..num_classes)
        .map(|k| round_count(n_max as f64 * r.powf(k as f64 / last)))
        .collect();
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass {
            class,
            detail: format!("r={r} is too small for n_max={n_max}"),
        });
    }
    let kind = if r == 1.0 {
        DistributionKind::Uniform
    } else {
        DistributionKind::Exponential
    };
    ClassCountProfile::new(counts, kind)
}

/// Power-law exponent `a` with `K^(-a) = alpha`, i.e. the tail/head ratio of
/// `(k+1)^(-a)` over `k = 0..K` equals `alpha`.
pub fn pareto_exponent(num_classes: usize, alpha: f64) -> f64 {
    if num_classes < 2 {
        return 0.0;
    }
    -alpha.ln() / (num_classes as f64).ln()
}

/// `counts[k] = max(1, round(n_max * (k+1)^(-a)))` with the exponent chosen
/// so the tail/head ratio equals `alpha`.
pub fn build_pareto_counts(
    n_max: usize,
    num_classes: usize,
    alpha: f64,
) -> Result<ClassCountProfile> {
    if n_max == 0 {
        return Err(Error::config("n_max must be at least 1"));
    }
    if num_classes == 0 {
        return Err(Error::config("pareto profile needs at least 1 class"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("pareto alpha must be in (0, 1], got {alpha}")));
    }
    if round_count(n_max as f64 * alpha) == 0 {
        return Err(Error::EmptyClass {
            class: num_classes - 1,
            detail: format!("alpha={alpha} is too small for n_max={n_max}"),
        });
    }
    let a = pareto_exponent(num_classes, alpha);
    let counts: Vec<usize> = (0..num_classes)
        .map(|k| round_count(n_max as f64 * ((k + 1) as f64).powf(-a)).max(1))
        .collect();
    let kind = if alpha == 1.0 {
        DistributionKind::Uniform
    } else {
        DistributionKind::Pareto
    };
    ClassCountProfile::new(counts, kind)
}
