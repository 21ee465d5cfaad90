//! Throughput probes for the neighbor gather and the block forward pass.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::gradcheck::{random_cluster, BlockCheckConfig, BlockFixture};
use crate::voxel::{build_neighbor_index, SparseVoxelGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub bench: String,
    pub voxels: usize,
    pub repeats: usize,
    pub seconds: f64,
    pub voxels_per_s: f64,
    /// Gather only: neighbor slots resolved per second (27 per voxel).
    pub slot_resolutions_per_s: Option<f64>,
}

fn check(voxels: usize, repeats: usize) -> Result<()> {
    if voxels == 0 || repeats == 0 {
        return Err(Error::invalid("benchmarks need at least one voxel and one repeat"));
    }
    Ok(())
}

/// Builds the 27-slot neighbor table of a random `voxels`-voxel cluster
/// `repeats` times.
pub fn bench_gather(voxels: usize, dilation: u32, repeats: usize, seed: u64) -> Result<BenchReport> {
    check(voxels, repeats)?;
    let coords = random_cluster(voxels, seed);
    let n = coords.len();
    let grid = SparseVoxelGrid::new(coords, vec![0.0; n], 1, None, 1, 1.0)?;
    build_neighbor_index(&grid, dilation)?;
    let start = Instant::now();
    for _ in 0..repeats {
        black_box(build_neighbor_index(black_box(&grid), dilation)?);
    }
    let seconds = start.elapsed().as_secs_f64().max(1e-9);
    let per_voxel = (n * repeats) as f64 / seconds;
    Ok(BenchReport {
        bench: "gather".into(),
        voxels: n,
        repeats,
        seconds,
        voxels_per_s: per_voxel,
        slot_resolutions_per_s: Some(per_voxel * 27.0),
    })
}

/// Runs the forward pass of one block on a random cluster.
pub fn bench_block(cfg: &BlockCheckConfig, repeats: usize) -> Result<BenchReport> {
    check(cfg.voxels, repeats)?;
    let fx = BlockFixture::new(cfg)?;
    let params = fx.store.values();
    let x = fx.input.of(params);
    fx.block.forward(params, x, &fx.geometry)?;
    let start = Instant::now();
    for _ in 0..repeats {
        black_box(fx.block.forward(params, black_box(x), &fx.geometry)?);
    }
    let seconds = start.elapsed().as_secs_f64().max(1e-9);
    Ok(BenchReport {
        bench: format!("block-{}", serde_json::to_value(cfg.kind)?.as_str().unwrap_or("?")),
        voxels: fx.geometry.len(),
        repeats,
        seconds,
        voxels_per_s: (fx.geometry.len() * repeats) as f64 / seconds,
        slot_resolutions_per_s: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::BlockKind;

    #[test]
    fn reports_are_consistent() {
        let r = bench_gather(500, 1, 3, 0).unwrap();
        assert_eq!((r.voxels, r.repeats, r.bench.as_str()), (500, 3, "gather"));
        assert!((r.slot_resolutions_per_s.unwrap() - 27.0 * r.voxels_per_s).abs() < 1e-6 * r.voxels_per_s);
        let b = bench_block(&BlockCheckConfig { kind: BlockKind::Vanilla, voxels: 200, ..Default::default() }, 2).unwrap();
        assert_eq!((b.voxels, b.bench.as_str()), (200, "block-vanilla"));
        assert!(bench_gather(0, 1, 1, 0).is_err());
        assert!(bench_block(&BlockCheckConfig::default(), 0).is_err());
    }
}
