//! Fused-view contrastive pretraining for long-tailed image data.
//!
//! Each training step pairs every anchor image with a random counterpart from
//! the same batch, builds a normalized and an augmented view of both, fuses
//! the online-encoder representations of `(anchor normalized, counterpart
//! augmented)` and the momentum-encoder representations of `(anchor augmented,
//! counterpart normalized)`, and contrasts the fused pairs with a loss that
//! eliminates similarities outside `[λl, λh]`.

// `!(x > 0.0)` style checks are how NaN gets rejected here
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod longtail;
pub mod objective;
pub mod views;

pub use error::{Error, Result};
