use rand::seq::index::sample;

use crate::numerics::rng_for;
use crate::voxel::{build_neighbor_index, downsample, occupancy_masks, OccupancyMask, SparseVoxelGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Collected {
    pub masks: Vec<OccupancyMask>,
    pub warnings: Vec<String>,
}

/// Downsamples `grid` until it reaches `stride`.
pub fn to_stride(grid: &SparseVoxelGrid, stride: u32) -> Result<SparseVoxelGrid> {
    if !stride.is_power_of_two() || stride < grid.stride() {
        return Err(Error::invalid(format!(
            "stride {stride} is not reachable from stride {}",
            grid.stride()
        )));
    }
    let mut g = grid.clone();
    while g.stride() < stride {
        g = downsample(&g, 2)?.0;
    }
    Ok(g)
}

/// One occupancy mask per voxel of every scene at `stride` and `dilation`,
/// optionally thinned to `sample_count` masks by a seeded uniform subsample.
pub fn collect_patterns(
    scenes: &[SparseVoxelGrid],
    stride: u32,
    dilation: u32,
    sample_count: Option<usize>,
    seed: u64,
) -> Result<Collected> {
    if scenes.is_empty() {
        return Err(Error::invalid("no scenes to collect patterns from"));
    }
    let mut masks = Vec::new();
    let mut warnings = Vec::new();
    for (s, scene) in scenes.iter().enumerate() {
        if scene.is_empty() {
            let w = format!("scene {s} is empty at stride {stride}; skipped");
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        let g = to_stride(scene, stride)?;
        masks.extend(occupancy_masks(&build_neighbor_index(&g, dilation)?));
    }
    if let Some(k) = sample_count {
        if k < masks.len() {
            let mut rng = rng_for(seed, &format!("collect-s{stride}-d{dilation}"));
            let mut picked = sample(&mut rng, masks.len(), k).into_vec();
            picked.sort_unstable();
            masks = picked.into_iter().map(|i| masks[i]).collect();
        }
    }
    Ok(Collected { masks, warnings })
}
