//! Mining geometric regions: occupancy masks are collected from scenes and
//! clustered with K-modes under Hamming distance; the centroids become the
//! spatial supports of the codebook elements.

mod codebook;
mod collect;
mod elbow;
mod kmodes;

pub use codebook::{build_region_codebook, BuildConfig, RegionSet};
pub use collect::{collect_patterns, to_stride, Collected};
pub use elbow::{elbow_from_curve, elbow_select, ElbowReport};
pub use kmodes::{kmodes, ClusterReport, KModesConfig};
