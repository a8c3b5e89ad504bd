//! Fusion algebra, similarity thresholds, the contrastive losses and the
//! information analysis of the pairing options.

mod fusion;
mod info;
mod loss;
mod similarity;

pub use fusion::{
    build_fused_pairs, fuse, fuse_rows, option_pairs, unfuse_grad, FusedPairBatch, FusionOp,
    PairingOption,
};
pub use info::{
    anchor_information_curve, info_ratios, InfoCurvePoint, InfoRatios, InfoVolumeModel,
};
pub use loss::{
    contrastive_loss, fused_partners, mi_lower_bound, mttv_loss, mttv_loss_full,
    mttv_representation_grads, nt_xent_loss, ContrastiveOutput, FusedLoss, LossConfig,
    RepresentationGrads,
};
pub(crate) use similarity::unit_rows;
pub use similarity::{cosine_similarity_matrix, elimination_rate, threshold_mask, Interval};

/// The four view slots of an anchor/counterpart quadruple. "First" is the
/// normalized view under the normalized+augmented scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViewSlot {
    AnchorFirst,
    AnchorSecond,
    CounterpartFirst,
    CounterpartSecond,
}

impl ViewSlot {
    pub fn is_anchor(self) -> bool {
        matches!(self, ViewSlot::AnchorFirst | ViewSlot::AnchorSecond)
    }
}
