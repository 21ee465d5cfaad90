use crate::voxel::{
    build_neighbor_index, occupancy_masks, NeighborIndex, OccupancyMask, SparseVoxelGrid, VoxelCoord,
};
use crate::{Error, Result};

/// Neighbor tables and occupancy masks of one stride level, for every
/// dilation a block may ask for.
#[derive(Debug, Clone)]
pub struct LevelGeometry {
    coords: Vec<VoxelCoord>,
    stride: u32,
    levels: Vec<(u32, NeighborIndex, Vec<OccupancyMask>)>,
}

impl LevelGeometry {
    pub fn build(grid: &SparseVoxelGrid, dilations: &[u32]) -> Result<Self> {
        let mut ds: Vec<u32> = dilations.to_vec();
        ds.sort_unstable();
        ds.dedup();
        let levels = ds
            .into_iter()
            .map(|d| {
                let idx = build_neighbor_index(grid, d)?;
                let masks = occupancy_masks(&idx);
                Ok((d, idx, masks))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            coords: grid.coords().to_vec(),
            stride: grid.stride(),
            levels,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[VoxelCoord] {
        &self.coords
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn dilations(&self) -> impl Iterator<Item = u32> + '_ {
        self.levels.iter().map(|l| l.0)
    }

    fn level(&self, dilation: u32) -> Result<&(u32, NeighborIndex, Vec<OccupancyMask>)> {
        self.levels
            .iter()
            .find(|l| l.0 == dilation)
            .ok_or_else(|| Error::structural(format!("no neighbor index for dilation {dilation} at stride {}", self.stride)))
    }

    pub fn index(&self, dilation: u32) -> Result<&NeighborIndex> {
        Ok(&self.level(dilation)?.1)
    }

    pub fn masks(&self, dilation: u32) -> Result<&[OccupancyMask]> {
        Ok(&self.level(dilation)?.2)
    }
}
