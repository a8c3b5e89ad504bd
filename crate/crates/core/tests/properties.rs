use ndarray::Array2;
use proptest::prelude::*;

use mttv::evaluation::{knn_predict, FeatureBank};
use mttv::longtail::build_exponential_counts;
use mttv::objective::{
    build_fused_pairs, elimination_rate, mttv_loss, threshold_mask, FusionOp, Interval, LossConfig,
};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_filter("rows need some length", move |v| {
            v.chunks(cols).all(|r| r.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        })
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn quad(n: usize, d: usize) -> impl Strategy<Value = [Array2<f64>; 4]> {
    (matrix(n, d), matrix(n, d), matrix(n, d), matrix(n, d)).prop_map(|(a, b, c, e)| [a, b, c, e])
}

fn loss(r: &[Array2<f64>; 4], cfg: &LossConfig) -> f64 {
    let b = build_fused_pairs(r[0].view(), r[1].view(), r[2].view(), r[3].view(), cfg.fusion).unwrap();
    mttv_loss(&b, cfg).unwrap()
}

fn cfg(tau: f64, masked: bool) -> LossConfig {
    let base = LossConfig {
        temperature: tau,
        ..LossConfig::default()
    };
    if masked {
        base
    } else {
        base.unmasked()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn loss_is_nonnegative_and_finite(r in quad(3, 4), tau in 0.05f64..2.0, masked: bool) {
        let l = loss(&r, &cfg(tau, masked));
        prop_assert!(l.is_finite() && l >= 0.0);
    }

    #[test]
    fn unmasked_loss_ignores_row_scale(r in quad(3, 4), scale in 0.1f64..10.0) {
        // with concat fusion each fused row is one representation row next to
        // another, so scaling both operands of a row leaves its direction
        let c = LossConfig { fusion: FusionOp::Concat, ..cfg(0.5, false) };
        let mut scaled = r.clone();
        for m in scaled.iter_mut() {
            m.row_mut(1).mapv_inplace(|v| v * scale);
        }
        prop_assert!((loss(&r, &c) - loss(&scaled, &c)).abs() < 1e-10);
    }

    #[test]
    fn loss_ignores_batch_order(r in quad(4, 3), masked: bool) {
        let c = cfg(0.3, masked);
        let order = [2usize, 0, 3, 1];
        let perm = r.clone().map(|m| m.select(ndarray::Axis(0), &order));
        prop_assert!((loss(&r, &c) - loss(&perm, &c)).abs() < 1e-12);
    }

    #[test]
    fn mask_is_idempotent_and_rate_is_a_fraction(
        v in prop::collection::vec(-1.0f64..=1.0, 36),
        low in -1.0f64..0.4,
        width in 0.05f64..1.0,
    ) {
        let s = Array2::from_shape_vec((6, 6), v).unwrap();
        let iv = Interval::new(low, (low + width).min(1.0)).unwrap();
        let once = threshold_mask(s.view(), iv);
        let twice = threshold_mask(once.view(), iv);
        let zeros_in_interval = iv.contains(0.0);
        if zeros_in_interval {
            prop_assert_eq!(&once, &twice);
        }
        let rate = elimination_rate(s.view(), iv);
        prop_assert!((0.0..=1.0).contains(&rate));
        prop_assert_eq!(elimination_rate(s.view(), Interval::FULL), 0.0);
    }

    #[test]
    fn exponential_counts_run_from_head_to_tail(n_max in 50usize..5000, k in 2usize..20, r in 0.01f64..=1.0) {
        if let Ok(p) = build_exponential_counts(n_max, k, r) {
            let c = p.counts();
            prop_assert_eq!(c[0], n_max);
            prop_assert!(c.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!((c[k - 1] as f64 - n_max as f64 * r).abs() <= 0.5);
        }
    }

    #[test]
    fn knn_ignores_feature_scale(bank in matrix(12, 3), queries in matrix(4, 3), scale in 0.1f64..10.0, k in 1usize..12) {
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let a = FeatureBank::new(bank.view(), labels.clone(), 3).unwrap();
        let b = FeatureBank::new((&bank * scale).view(), labels, 3).unwrap();
        prop_assert_eq!(
            knn_predict(&a, queries.view(), k).unwrap(),
            knn_predict(&b, (&queries * scale).view(), k).unwrap()
        );
    }
}
