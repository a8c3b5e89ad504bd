//! Per-epoch learning rate: linear warm-up, then cosine decay to zero.

use std::f64::consts::PI;

/// Warm-up length in whole epochs: `round(fraction * epochs)`.
pub fn warmup_epochs(epochs: usize, fraction: f64) -> usize {
    ((fraction * epochs as f64).round() as usize).min(epochs)
}

/// Learning rate used throughout `epoch` (0-based).
///
/// During warm-up epoch `e` runs at `base * (e + 1) / W`; afterwards the rate
/// follows `base * (1 + cos(pi * (e - W) / (E - W))) / 2`.
pub fn learning_rate(base: f64, epoch: usize, epochs: usize, warmup: usize) -> f64 {
    if epoch < warmup {
        return base * (epoch + 1) as f64 / warmup as f64;
    }
    let span = epochs.saturating_sub(warmup).max(1) as f64;
    let progress = (epoch - warmup) as f64 / span;
    base * 0.5 * (1.0 + (PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_then_cosine() {
        let (base, epochs) = (0.1, 200);
        let w = warmup_epochs(epochs, 0.1);
        assert_eq!(w, 20);
        assert!((learning_rate(base, 0, epochs, w) - 0.005).abs() < 1e-15);
        assert!((learning_rate(base, 19, epochs, w) - base).abs() < 1e-15);
        assert_eq!(learning_rate(base, 20, epochs, w), base);
        assert!((learning_rate(base, 110, epochs, w) - base * 0.5).abs() < 1e-12);
        assert!(learning_rate(base, 199, epochs, w) < 1e-4);
        let lrs: Vec<f64> = (w..epochs).map(|e| learning_rate(base, e, epochs, w)).collect();
        assert!(lrs.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn no_warmup_and_tiny_runs() {
        assert_eq!(warmup_epochs(5, 0.1), 1);
        assert_eq!(warmup_epochs(4, 0.1), 0);
        assert_eq!(learning_rate(0.3, 0, 4, 0), 0.3);
        assert_eq!(learning_rate(0.3, 0, 1, 0), 0.3);
    }
}
