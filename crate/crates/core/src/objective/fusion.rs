//! Fusion of two representations into one, and the three ways of grouping an
//! anchor/counterpart quadruple into two fused operands.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::ViewSlot;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionOp {
    /// Elementwise `a + b`; operands must share a dimension.
    #[default]
    Sum,
    /// `[a, b]`; output has the summed dimension.
    Concat,
}

impl FusionOp {
    pub fn output_dim(self, a: usize, b: usize) -> Result<usize> {
        match self {
            FusionOp::Sum if a != b => Err(Error::shape(format!("sum fusion of dims {a} and {b}"))),
            FusionOp::Sum => Ok(a),
            FusionOp::Concat => Ok(a + b),
        }
    }
}

pub fn fuse(a: &[f64], b: &[f64], op: FusionOp) -> Result<Vec<f64>> {
    op.output_dim(a.len(), b.len())?;
    Ok(match op {
        FusionOp::Sum => a.iter().zip(b).map(|(x, y)| x + y).collect(),
        FusionOp::Concat => a.iter().chain(b).copied().collect(),
    })
}

/// Row-wise [`fuse`] of two matrices with equal row counts.
pub fn fuse_rows<'a>(a: ArrayView2<'a, f64>, b: ArrayView2<'a, f64>, op: FusionOp) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape(format!("fusing {} rows with {}", a.nrows(), b.nrows())));
    }
    op.output_dim(a.ncols(), b.ncols())?;
    Ok(match op {
        FusionOp::Sum => &a + &b,
        FusionOp::Concat => concatenate(Axis(1), &[a, b]).expect("row counts checked"),
    })
}

/// Split the gradient of a fused matrix back onto its two operands, the
/// first of which had `left_dim` columns.
pub fn unfuse_grad(grad: ArrayView2<'_, f64>, op: FusionOp, left_dim: usize) -> (Array2<f64>, Array2<f64>) {
    match op {
        FusionOp::Sum => (grad.to_owned(), grad.to_owned()),
        FusionOp::Concat => (
            grad.slice(s![.., ..left_dim]).to_owned(),
            grad.slice(s![.., left_dim..]).to_owned(),
        ),
    }
}

/// Fused queries and keys; row `i` of each forms a positive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedPairBatch {
    pub queries: Array2<f64>,
    pub keys: Array2<f64>,
}

impl FusedPairBatch {
    pub fn new(queries: Array2<f64>, keys: Array2<f64>) -> Result<Self> {
        if queries.dim() != keys.dim() {
            return Err(Error::shape(format!(
                "queries {:?} and keys {:?} differ",
                queries.dim(),
                keys.dim()
            )));
        }
        Ok(Self { queries, keys })
    }

    pub fn len(&self) -> usize {
        self.queries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.nrows() == 0
    }
}

/// `q_i = z_A_n[i] ⊛ z_C_a[i]`, `k_i = z_A_a[i] ⊛ z_C_n[i]`.
pub fn build_fused_pairs<'a>(
    anchor_n: ArrayView2<'a, f64>,
    counterpart_a: ArrayView2<'a, f64>,
    anchor_a: ArrayView2<'a, f64>,
    counterpart_n: ArrayView2<'a, f64>,
    op: FusionOp,
) -> Result<FusedPairBatch> {
    let shape = anchor_n.dim();
    if [counterpart_a.dim(), anchor_a.dim(), counterpart_n.dim()]
        .iter()
        .any(|&d| d != shape)
    {
        return Err(Error::shape("all four representation matrices must share a shape"));
    }
    FusedPairBatch::new(
        fuse_rows(anchor_n, counterpart_a, op)?,
        fuse_rows(anchor_a, counterpart_n, op)?,
    )
}

/// Grouping of the four representations into two fused operands.
///
/// With image 1 = anchor, image 2 = counterpart, and view 1/2 = the first and
/// second view slot:
/// * option 1 crosses images and views: `(z1v1 ⊛ z2v2)` vs `(z1v2 ⊛ z2v1)`;
/// * option 2 fuses the same view across images: `(z1v1 ⊛ z2v1)` vs `(z1v2 ⊛ z2v2)`;
/// * option 3 fuses within an image: `(z1v1 ⊛ z1v2)` vs `(z2v1 ⊛ z2v2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PairingOption {
    #[default]
    Cross,
    SameView,
    SameImage,
}

impl TryFrom<u8> for PairingOption {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        match id {
            1 => Ok(PairingOption::Cross),
            2 => Ok(PairingOption::SameView),
            3 => Ok(PairingOption::SameImage),
            other => Err(Error::config(format!("pairing option must be 1, 2 or 3, got {other}"))),
        }
    }
}

impl From<PairingOption> for u8 {
    fn from(o: PairingOption) -> u8 {
        match o {
            PairingOption::Cross => 1,
            PairingOption::SameView => 2,
            PairingOption::SameImage => 3,
        }
    }
}

impl std::fmt::Display for PairingOption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "option-{}", u8::from(*self))
    }
}

impl PairingOption {
    pub const ALL: [PairingOption; 3] = [
        PairingOption::Cross,
        PairingOption::SameView,
        PairingOption::SameImage,
    ];

    /// View slots of the left and right fused operands, in fusion order.
    pub fn operands(self) -> ([ViewSlot; 2], [ViewSlot; 2]) {
        use ViewSlot::*;
        match self {
            PairingOption::Cross => ([AnchorFirst, CounterpartSecond], [AnchorSecond, CounterpartFirst]),
            PairingOption::SameView => ([AnchorFirst, CounterpartFirst], [AnchorSecond, CounterpartSecond]),
            PairingOption::SameImage => ([AnchorFirst, AnchorSecond], [CounterpartFirst, CounterpartSecond]),
        }
    }
}

/// Left and right fused matrices for a pairing option. Arguments are image 1
/// (anchor) views 1 and 2, then image 2 (counterpart) views 1 and 2.
pub fn option_pairs<'a>(
    z1_v1: ArrayView2<'a, f64>,
    z1_v2: ArrayView2<'a, f64>,
    z2_v1: ArrayView2<'a, f64>,
    z2_v2: ArrayView2<'a, f64>,
    option: PairingOption,
    op: FusionOp,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let shape = z1_v1.dim();
    if [z1_v2.dim(), z2_v1.dim(), z2_v2.dim()].iter().any(|&d| d != shape) {
        return Err(Error::shape("all four representation matrices must share a shape"));
    }
    let pick = |slot: ViewSlot| match slot {
        ViewSlot::AnchorFirst => z1_v1,
        ViewSlot::AnchorSecond => z1_v2,
        ViewSlot::CounterpartFirst => z2_v1,
        ViewSlot::CounterpartSecond => z2_v2,
    };
    let (left, right) = option.operands();
    Ok((
        fuse_rows(pick(left[0]), pick(left[1]), op)?,
        fuse_rows(pick(right[0]), pick(right[1]), op)?,
    ))
}
