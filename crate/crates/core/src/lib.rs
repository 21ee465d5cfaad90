//! Codebook-based, geometry-aware self-attention for sparse voxel grids.
//!
//! The crate is organised bottom-up:
//!
//! * [`voxel`] – voxelization, neighbor tables, occupancy masks, pooling and scene I/O.
//! * [`patterns`] – mining of geometric regions from occupancy masks with K-modes.
//! * [`numerics`] – parameter store, softmax/entropy, Adam, finite differences, checkpoints.
//! * [`attention`] – the coded attention block (forward and analytic backward).
//! * [`synth`] – procedural labelled scenes with radial density falloff.
//! * [`model`] – a small sparse U-Net, training loop and evaluation.
//! * [`diagnostics`] – collapse entropy, choice maps, generalization gap, random-codebook baseline.
//! * [`bench`] – throughput probes used by the CLI.
//! * [`cli`] – the `codedvtr` command line.

pub mod attention;
pub mod bench;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod numerics;
pub mod patterns;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
