//! Sparse voxel grids: voxelization, neighbor resolution, occupancy masks and pooling.

mod coord;
mod grid;
pub mod io;
mod neighbors;
mod pool;

pub use coord::{CoordMap, CoordHasher, VoxelCoord};
pub use grid::{voxelize, LabeledPoint, SparseVoxelGrid};
pub use neighbors::{
    build_neighbor_index, occupancy_masks, occupancy_of, NeighborIndex, NeighborOffsets, OccupancyMask, ABSENT,
    CENTER_SLOT, NUM_SLOTS,
};
pub use pool::{downsample, upsample, VoxelMapping};
