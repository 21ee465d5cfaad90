use crate::attention::LevelGeometry;
use crate::voxel::io::ScenePoint;
use crate::voxel::{downsample, voxelize, LabeledPoint, SparseVoxelGrid, VoxelMapping};
use crate::{Error, Result};

/// Stride-1 grid with per-voxel features `[1, mean z / height_scale]`.
pub fn scene_grid(points: &[ScenePoint], voxel_size: f64, height_scale: f64) -> Result<SparseVoxelGrid> {
    let lp: Vec<LabeledPoint> = points
        .iter()
        .map(|p| LabeledPoint {
            position: p.position,
            features: vec![1.0, p.position[2] / height_scale],
            label: p.label,
        })
        .collect();
    voxelize(&lp, voxel_size)
}

/// Everything the network needs about one scene, built once.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub grid: SparseVoxelGrid,
    /// One entry per U-Net level.
    pub levels: Vec<LevelGeometry>,
    /// `mappings[s]` sends level `s` rows to level `s + 1` rows.
    pub mappings: Vec<VoxelMapping>,
}

impl SceneData {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.grid.labels()
    }
}

/// Builds the level pyramid; `dilations[s]` lists the neighbor tables level
/// `s` must provide.
pub fn prepare_scene(grid: SparseVoxelGrid, dilations: &[Vec<u32>]) -> Result<SceneData> {
    if grid.is_empty() {
        return Err(Error::invalid("scene has no voxels"));
    }
    if grid.stride() != 1 {
        return Err(Error::invalid("scenes enter the network at stride 1"));
    }
    let mut levels = Vec::with_capacity(dilations.len());
    let mut mappings = Vec::new();
    let mut current = grid.clone();
    for (s, ds) in dilations.iter().enumerate() {
        levels.push(LevelGeometry::build(&current, ds)?);
        if s + 1 < dilations.len() {
            let (coarse, map) = downsample(&current, 2)?;
            mappings.push(map);
            current = coarse;
        }
    }
    Ok(SceneData { grid, levels, mappings })
}
