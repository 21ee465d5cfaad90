//! Procedural labelled scenes: floors, walls, corners, poles and clutter with
//! a LiDAR-like radial density falloff.

mod corpus;
mod scene;

pub use corpus::{make_corpus, Corpus, CorpusConfig, Scene};
pub use scene::{generate, Axis, Primitive, PrimitiveKind, SceneSpec, CLASS_NAMES, NUM_CLASSES};
