//! Information-volume bookkeeping for the three pairing options.
//!
//! Each view carries a volume in `[0, 1]`: normalized views are invertible and
//! keep volume 1, augmented views keep less. A fused operand's volume is the
//! sum of its parts, and its anchor information ratio is the anchor's share of
//! that sum. The smaller ratio of the two operands bounds what they can share
//! about the anchor.

use serde::{Deserialize, Serialize};

use super::fusion::PairingOption;
use super::ViewSlot;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoVolumeModel {
    pub normalized_volume: f64,
    pub augmented_volume: f64,
}

impl Default for InfoVolumeModel {
    fn default() -> Self {
        Self {
            normalized_volume: 1.0,
            augmented_volume: 0.8,
        }
    }
}

impl InfoVolumeModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(self.normalized_volume) || !ok(self.augmented_volume) {
            return Err(Error::config("information volumes must lie in [0, 1]"));
        }
        Ok(())
    }

    fn volume(&self, slot: ViewSlot) -> f64 {
        match slot {
            ViewSlot::AnchorFirst | ViewSlot::CounterpartFirst => self.normalized_volume,
            ViewSlot::AnchorSecond | ViewSlot::CounterpartSecond => self.augmented_volume,
        }
    }

    /// Anchor share of a fused operand's volume; 0 for an empty operand.
    fn anchor_ratio(&self, operand: [ViewSlot; 2]) -> f64 {
        let total: f64 = operand.iter().map(|&s| self.volume(s)).sum();
        let anchor: f64 = operand
            .iter()
            .filter(|s| s.is_anchor())
            .map(|&s| self.volume(s))
            .fold(0.0, |a, b| a + b);
        if total > 0.0 {
            anchor / total
        } else {
            0.0
        }
    }
}

/// Anchor information ratios of the left and right operands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoRatios {
    pub left: f64,
    pub right: f64,
}

impl InfoRatios {
    pub fn shared_capacity(&self) -> f64 {
        self.left.min(self.right)
    }
}

pub fn info_ratios(option: PairingOption, model: &InfoVolumeModel) -> Result<InfoRatios> {
    model.validate()?;
    let (left, right) = option.operands();
    Ok(InfoRatios {
        left: model.anchor_ratio(left),
        right: model.anchor_ratio(right),
    })
}

/// One point of an anchor-information curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoCurvePoint {
    /// `1 - augmented volume`.
    pub information_loss: f64,
    pub left: f64,
    pub right: f64,
    pub shared: f64,
}

/// Sweep the augmented volume from 1 down to 0 in `steps` intervals with the
/// normalized volume fixed at 1.
pub fn anchor_information_curve(option: PairingOption, steps: usize) -> Vec<InfoCurvePoint> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|i| {
            let loss = i as f64 / steps as f64;
            let model = InfoVolumeModel {
                normalized_volume: 1.0,
                augmented_volume: 1.0 - loss,
            };
            let r = info_ratios(option, &model).expect("volumes in range");
            InfoCurvePoint {
                information_loss: loss,
                left: r.left,
                right: r.right,
                shared: r.shared_capacity(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_option_ratios() {
        let r = info_ratios(PairingOption::Cross, &InfoVolumeModel::default()).unwrap();
        assert!((r.left - 1.0 / 1.8).abs() < 1e-15);
        assert!((r.right - 0.8 / 1.8).abs() < 1e-15);
        assert_eq!((r.left * 100.0).floor() / 100.0, 0.55);
        assert_eq!((r.right * 100.0).floor() / 100.0, 0.44);
        assert_eq!(r.shared_capacity(), r.right);
    }

    #[test]
    fn same_view_and_same_image_ratios() {
        let m = InfoVolumeModel::default();
        let r2 = info_ratios(PairingOption::SameView, &m).unwrap();
        assert_eq!((r2.left, r2.right), (0.5, 0.5));
        let r3 = info_ratios(PairingOption::SameImage, &m).unwrap();
        assert_eq!((r3.left, r3.right), (1.0, 0.0));
        assert_eq!(r3.shared_capacity(), 0.0);
    }

    #[test]
    fn curves_follow_the_option_shapes() {
        let c1 = anchor_information_curve(PairingOption::Cross, 10);
        // shared information grows as information loss shrinks
        assert!(c1.windows(2).all(|w| w[0].shared >= w[1].shared));
        assert!((c1[0].shared - 0.5).abs() < 1e-15);
        let c2 = anchor_information_curve(PairingOption::SameView, 10);
        assert!(c2[..10].iter().all(|p| p.shared == 0.5));
        let c3 = anchor_information_curve(PairingOption::SameImage, 10);
        assert!(c3.iter().all(|p| p.right == 0.0 && p.left == 1.0));
    }

    #[test]
    fn out_of_range_volume_rejected() {
        let m = InfoVolumeModel {
            normalized_volume: 1.0,
            augmented_volume: 1.3,
        };
        assert!(info_ratios(PairingOption::Cross, &m).is_err());
    }
}
