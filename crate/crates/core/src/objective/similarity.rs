//! Cosine similarity matrices and the closed-interval threshold mask.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed similarity interval `[low, high]`; values outside are eliminated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    /// `[-1, 1]`: keeps every cosine similarity.
    pub const FULL: Interval = Interval { low: -1.0, high: 1.0 };

    pub fn new(low: f64, high: f64) -> Result<Self> {
        let i = Interval { low, high };
        i.validate()?;
        Ok(i)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.low < self.high) || !(self.low >= -1.0) || !(self.high <= 1.0) {
            return Err(Error::config(format!(
                "threshold interval must satisfy -1 <= low < high <= 1, got [{}, {}]",
                self.low, self.high
            )));
        }
        Ok(())
    }

    /// Closed-interval membership. Cosine values that overshoot `[-1, 1]`
    /// through rounding are clamped first, so [`Interval::FULL`] keeps
    /// everything.
    #[inline]
    pub fn contains(&self, s: f64) -> bool {
        let s = s.clamp(-1.0, 1.0);
        self.low <= s && s <= self.high
    }
}

/// Row L2 norms; errors on a zero row.
pub(crate) fn row_norms(m: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let norms = m.map_axis(Axis(1), |row| row.dot(&row).sqrt());
    if let Some(row) = norms.iter().position(|n| !n.is_finite()) {
        return Err(Error::Numeric(format!("row {row} of a similarity input is not finite")));
    }
    if let Some(row) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::ZeroNorm { row });
    }
    Ok(norms)
}

pub(crate) fn unit_rows(m: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = row_norms(m)?;
    let unit = &m / &norms.view().insert_axis(Axis(1));
    Ok((unit, norms))
}

/// `S[i, j] = <a_i, b_j> / (|a_i| |b_j|)`.
pub fn cosine_similarity_matrix(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape(format!("cosine of dims {} and {}", a.ncols(), b.ncols())));
    }
    let (ua, _) = unit_rows(a)?;
    let (ub, _) = unit_rows(b)?;
    Ok(ua.dot(&ub.t()))
}

/// Keep entries inside `interval`, zero the rest.
pub fn threshold_mask(s: ArrayView2<'_, f64>, interval: Interval) -> Array2<f64> {
    s.mapv(|v| if interval.contains(v) { v } else { 0.0 })
}

/// Fraction of entries outside `interval`. For square (self-similarity)
/// matrices the diagonal is skipped.
pub fn elimination_rate(s: ArrayView2<'_, f64>, interval: Interval) -> f64 {
    let square = s.nrows() == s.ncols();
    let mut total = 0usize;
    let mut out = 0usize;
    for ((i, j), &v) in s.indexed_iter() {
        if square && i == j {
            continue;
        }
        total += 1;
        if !interval.contains(v) {
            out += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        out as f64 / total as f64
    }
}
