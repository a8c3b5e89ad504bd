//! NT-Xent and the thresholded fused-pair contrastive loss, with analytic
//! gradients.
//!
//! Both losses run through one core. For `M` items with cosine matrix `S`,
//! an optional closed interval `[λl, λh]` replaces out-of-range entries by 0
//! (`S'`), and each anchor `i` with partner `p(i)` contributes
//!
//! ```text
//! l_i = -S'[i, p(i)]/τ + log Σ_{k≠i} exp(S'[i, k]/τ)
//! ```
//!
//! The loss is the mean of `l_i` over all `M` anchors. The mask is a constant
//! for differentiation: eliminated entries carry no gradient.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::fusion::{build_fused_pairs, unfuse_grad, FusedPairBatch, FusionOp};
use super::similarity::{elimination_rate, unit_rows, Interval};
use crate::error::{Error, Result};

/// Temperature, elimination thresholds and fusion operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub lambda_low: f64,
    pub lambda_high: f64,
    #[serde(default)]
    pub fusion: FusionOp,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.5,
            lambda_low: 0.1,
            lambda_high: 0.9,
            fusion: FusionOp::Sum,
        }
    }
}

impl LossConfig {
    /// Same temperature and fusion, no elimination.
    pub fn unmasked(self) -> Self {
        Self {
            lambda_low: -1.0,
            lambda_high: 1.0,
            ..self
        }
    }

    pub fn interval(&self) -> Interval {
        Interval {
            low: self.lambda_low,
            high: self.lambda_high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_temperature(self.temperature)?;
        self.interval().validate()
    }
}

fn check_temperature(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

/// Loss value plus the similarity statistics the training loop logs.
#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub loss: f64,
    /// Gradient with respect to the input items, when requested.
    pub grad: Option<Array2<f64>>,
    /// Raw (unmasked) cosine matrix over the items.
    pub similarity: Array2<f64>,
    pub elimination_rate: f64,
}

impl ContrastiveOutput {
    pub fn mean_positive(&self, partner: &[usize]) -> f64 {
        partner
            .iter()
            .enumerate()
            .map(|(i, &p)| self.similarity[[i, p]])
            .sum::<f64>()
            / partner.len() as f64
    }

    pub fn mean_negative(&self, partner: &[usize]) -> f64 {
        let m = partner.len();
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 0..m {
            for k in 0..m {
                if k != i && k != partner[i] {
                    acc += self.similarity[[i, k]];
                    count += 1;
                }
            }
        }
        if count == 0 {
            0.0
        } else {
            acc / count as f64
        }
    }
}

fn check_partner(partner: &[usize], m: usize) -> Result<()> {
    if partner.len() != m {
        return Err(Error::shape(format!("{} partners for {m} items", partner.len())));
    }
    for (i, &p) in partner.iter().enumerate() {
        if p >= m || p == i || partner[p] != i {
            return Err(Error::config(format!(
                "item {i} must have exactly one positive partner (got {p})"
            )));
        }
    }
    Ok(())
}

/// Shared core of NT-Xent and the fused-pair loss.
pub fn contrastive_loss(
    items: ArrayView2<'_, f64>,
    partner: &[usize],
    temperature: f64,
    interval: Option<Interval>,
    with_grad: bool,
) -> Result<ContrastiveOutput> {
    check_temperature(temperature)?;
    let m = items.nrows();
    if m < 2 {
        return Err(Error::config("contrastive loss needs at least 2 items"));
    }
    check_partner(partner, m)?;

    let (unit, norms) = unit_rows(items)?;
    let sim = unit.dot(&unit.t());
    let kept = |i: usize, k: usize| interval.is_none_or(|iv| iv.contains(sim[[i, k]]));
    let masked = |i: usize, k: usize| if kept(i, k) { sim[[i, k]] } else { 0.0 };

    let inv_tau = 1.0 / temperature;
    let mut total = 0.0;
    let mut coeff = with_grad.then(|| Array2::<f64>::zeros((m, m)));
    let mut logits = vec![0.0; m];
    for i in 0..m {
        let mut max = f64::NEG_INFINITY;
        for k in 0..m {
            if k != i {
                logits[k] = masked(i, k) * inv_tau;
                max = max.max(logits[k]);
            }
        }
        let sum: f64 = (0..m).filter(|&k| k != i).map(|k| (logits[k] - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - logits[partner[i]];

        if let Some(c) = coeff.as_mut() {
            let scale = inv_tau / m as f64;
            for k in 0..m {
                if k != i {
                    c[[i, k]] = (logits[k] - lse).exp() * scale;
                }
            }
            c[[i, partner[i]]] -= scale;
            for k in 0..m {
                if k != i && !kept(i, k) {
                    c[[i, k]] = 0.0;
                }
            }
        }
    }
    let loss = total / m as f64;

    let grad = coeff.map(|c| {
        // dL/du_i = Σ_j (C_ij + C_ji) u_j; then project off u_i and divide by |x_i|
        let sym = &c + &c.t();
        let du = sym.dot(&unit);
        let mut g = du.clone();
        for (i, mut row) in g.axis_iter_mut(Axis(0)).enumerate() {
            let u = unit.row(i);
            let radial = du.row(i).dot(&u);
            row.zip_mut_with(&u, |v, &ui| *v = (*v - radial * ui) / norms[i]);
        }
        g
    });

    let elimination = interval.map_or(0.0, |iv| elimination_rate(sim.view(), iv));
    Ok(ContrastiveOutput {
        loss,
        grad,
        similarity: sim,
        elimination_rate: elimination,
    })
}

/// Plain NT-Xent over `views` where `partner[i]` is the positive of item `i`.
pub fn nt_xent_loss(views: ArrayView2<'_, f64>, partner: &[usize], temperature: f64) -> Result<f64> {
    Ok(contrastive_loss(views, partner, temperature, None, false)?.loss)
}

/// Partner map for `[q_1..q_N, k_1..k_N]`: `q_i <-> k_i`.
pub fn fused_partners(n: usize) -> Vec<usize> {
    (0..2 * n).map(|i| if i < n { i + n } else { i - n }).collect()
}

fn stacked(batch: &FusedPairBatch) -> Array2<f64> {
    concatenate(Axis(0), &[batch.queries.view(), batch.keys.view()]).expect("equal shapes")
}

/// Thresholded contrastive loss over the `2N` fused items.
pub fn mttv_loss(batch: &FusedPairBatch, cfg: &LossConfig) -> Result<f64> {
    Ok(mttv_loss_full(batch, cfg, false)?.output.loss)
}

/// Loss on a fused batch with gradients split back onto queries and keys.
#[derive(Debug, Clone)]
pub struct FusedLoss {
    pub output: ContrastiveOutput,
    pub grad_queries: Option<Array2<f64>>,
    pub grad_keys: Option<Array2<f64>>,
}

pub fn mttv_loss_full(batch: &FusedPairBatch, cfg: &LossConfig, with_grad: bool) -> Result<FusedLoss> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::config("empty fused batch"));
    }
    let n = batch.len();
    let items = stacked(batch);
    let mut output = contrastive_loss(
        items.view(),
        &fused_partners(n),
        cfg.temperature,
        Some(cfg.interval()),
        with_grad,
    )?;
    let (grad_queries, grad_keys) = match output.grad.take() {
        Some(g) => (
            Some(g.slice(s![..n, ..]).to_owned()),
            Some(g.slice(s![n.., ..]).to_owned()),
        ),
        None => (None, None),
    };
    Ok(FusedLoss {
        output,
        grad_queries,
        grad_keys,
    })
}

/// Gradients of the fused-pair loss with respect to the four representation
/// matrices, in argument order.
#[derive(Debug, Clone)]
pub struct RepresentationGrads {
    pub loss: f64,
    pub anchor_n: Array2<f64>,
    pub counterpart_a: Array2<f64>,
    pub anchor_a: Array2<f64>,
    pub counterpart_n: Array2<f64>,
}

pub fn mttv_representation_grads<'a>(
    anchor_n: ArrayView2<'a, f64>,
    counterpart_a: ArrayView2<'a, f64>,
    anchor_a: ArrayView2<'a, f64>,
    counterpart_n: ArrayView2<'a, f64>,
    cfg: &LossConfig,
) -> Result<RepresentationGrads> {
    let batch = build_fused_pairs(anchor_n, counterpart_a, anchor_a, counterpart_n, cfg.fusion)?;
    let fused = mttv_loss_full(&batch, cfg, true)?;
    let d = anchor_n.ncols();
    let gq = fused.grad_queries.expect("requested");
    let gk = fused.grad_keys.expect("requested");
    let (g_an, g_ca) = unfuse_grad(gq.view(), cfg.fusion, d);
    let (g_aa, g_cn) = unfuse_grad(gk.view(), cfg.fusion, d);
    Ok(RepresentationGrads {
        loss: fused.output.loss,
        anchor_n: g_an,
        counterpart_a: g_ca,
        anchor_a: g_aa,
        counterpart_n: g_cn,
    })
}

/// Contrastive lower bound on the mutual information between the two fused
/// streams: `log(N) - loss`.
pub fn mi_lower_bound(loss: f64, n: usize) -> f64 {
    (n as f64).ln() - loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn uniform_similarities_give_log_two_n_minus_one() {
        for n in 1..6 {
            let items = Array2::from_elem((2 * n, 3), 0.7);
            let l = nt_xent_loss(items.view(), &fused_partners(n), 0.3).unwrap();
            let expected = ((2 * n - 1) as f64).ln();
            assert!((l - expected).abs() < 1e-12, "n={n}");
        }
        let items = Array2::from_elem((4, 5), -1.2);
        assert!((nt_xent_loss(items.view(), &fused_partners(2), 0.1).unwrap() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_temperature_flattens() {
        let items = random(6, 4, 3);
        let l = nt_xent_loss(items.view(), &fused_partners(3), 1e7).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn bad_temperature_and_pairing_rejected() {
        let items = random(4, 3, 0);
        assert!(nt_xent_loss(items.view(), &fused_partners(2), 0.0).is_err());
        assert!(nt_xent_loss(items.view(), &fused_partners(2), -1.0).is_err());
        assert!(nt_xent_loss(items.view(), &[1, 0, 3, 3], 0.5).is_err());
        assert!(nt_xent_loss(items.view(), &[1, 2, 3, 0], 0.5).is_err());
        assert!(nt_xent_loss(items.view(), &[1, 0], 0.5).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        let b = FusedPairBatch::new(Array2::zeros((0, 3)), Array2::zeros((0, 3))).unwrap();
        assert!(mttv_loss(&b, &LossConfig::default()).is_err());
    }

    #[test]
    fn full_interval_matches_nt_xent_exactly() {
        let q = random(3, 5, 1);
        let k = random(3, 5, 2);
        let cfg = LossConfig::default().unmasked();
        let batch = FusedPairBatch::new(q.clone(), k.clone()).unwrap();
        let items = concatenate(Axis(0), &[q.view(), k.view()]).unwrap();
        assert_eq!(
            mttv_loss(&batch, &cfg).unwrap(),
            nt_xent_loss(items.view(), &fused_partners(3), cfg.temperature).unwrap()
        );
    }

    #[test]
    fn masking_a_hard_negative_lowers_loss() {
        // q0 and q1 nearly parallel (cos 0.95), other pairs moderate
        let q = array![[1.0, 0.0, 0.0], [0.95, 0.3122498999, 0.0]];
        let k = array![[0.8, 0.0, 0.6], [0.2, 0.8, 0.565685]];
        let batch = FusedPairBatch::new(q, k).unwrap();
        let masked = LossConfig {
            lambda_low: -1.0,
            lambda_high: 0.9,
            ..LossConfig::default()
        };
        let full = masked.unmasked();
        assert!(mttv_loss(&batch, &masked).unwrap() < mttv_loss(&batch, &full).unwrap());
    }

    #[test]
    fn scale_invariance_and_pair_permutation() {
        let q = random(4, 3, 5);
        let k = random(4, 3, 6);
        let cfg = LossConfig {
            lambda_low: -0.5,
            lambda_high: 0.8,
            ..LossConfig::default()
        };
        let base = mttv_loss(&FusedPairBatch::new(q.clone(), k.clone()).unwrap(), &cfg).unwrap();
        let mut q2 = q.clone();
        q2.row_mut(2).mapv_inplace(|v| v * 4.0);
        let scaled = mttv_loss(&FusedPairBatch::new(q2, k.clone()).unwrap(), &cfg).unwrap();
        assert!((base - scaled).abs() < 1e-12);

        let perm = [2, 0, 3, 1];
        let qp = q.select(Axis(0), &perm);
        let kp = k.select(Axis(0), &perm);
        let permuted = mttv_loss(&FusedPairBatch::new(qp, kp).unwrap(), &cfg).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference_on_items() {
        let items = random(6, 4, 9);
        let partner = fused_partners(3);
        let iv = Some(Interval { low: -0.3, high: 0.6 });
        let out = contrastive_loss(items.view(), &partner, 0.4, iv, true).unwrap();
        let g = out.grad.unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for j in 0..4 {
                let mut plus = items.clone();
                plus[[i, j]] += h;
                let mut minus = items.clone();
                minus[[i, j]] -= h;
                let lp = contrastive_loss(plus.view(), &partner, 0.4, iv, false).unwrap().loss;
                let lm = contrastive_loss(minus.view(), &partner, 0.4, iv, false).unwrap().loss;
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-6, "({i},{j}) fd={fd} an={}", g[[i, j]]);
            }
        }
    }

    #[test]
    fn mi_bound_examples() {
        assert_eq!(mi_lower_bound(8f64.ln(), 8), 0.0);
        assert!(mi_lower_bound(1.0, 4) < mi_lower_bound(0.5, 4));
    }

    #[test]
    fn similarity_statistics() {
        let items = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let partner = [1, 0, 3, 2];
        let out = contrastive_loss(items.view(), &partner, 0.5, None, false).unwrap();
        assert!((out.mean_positive(&partner) - 1.0).abs() < 1e-12);
        assert!(out.mean_negative(&partner).abs() < 1e-12);
    }
}
