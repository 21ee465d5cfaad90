//! The coded attention block and its two reference blocks.
//!
//! A block maps `N x C` voxel features to `N x C` features:
//!
//! ```text
//! u   = LayerNorm(x)                      (per-voxel, learned scale/shift)
//! g   = u W_value                         (split into H head groups)
//! y_i = sum over dilations j, slots o:  K_j[o, h] * g[neighbor_j(i, o)][head h]
//! out = x + SiLU(y) W_out
//! ```
//!
//! The blocks differ only in the per-voxel kernel `K`:
//!
//! * conv – one learned `27 x H` kernel at dilation 1;
//! * vanilla – per-head softmax over the raw relation logits of present neighbors;
//! * coded – a softmax-weighted mix of `M x D` masked prototypes, optionally
//!   biased by how well each region matches the voxel's occupancy.

mod baselines;
mod block;
mod codebook;
mod coded;
mod geometry;
pub mod gradcheck;
pub mod ops;
mod plumbing;

pub use baselines::{ConvBlock, VanillaBlock};
pub use block::{Block, BlockCache, BlockKind, BlockTrace};
pub use codebook::RegionCodebook;
pub use coded::{ChoiceMode, CodedBlock, CodedOptions};
pub use geometry::LevelGeometry;
pub use plumbing::{Plumbing, Relation};

#[cfg(test)]
mod tests;
