//! Finite-difference harness for a single block on a small random grid.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Block, BlockKind, CodedBlock, CodedOptions, ConvBlock, LevelGeometry, RegionCodebook, VanillaBlock};
use crate::numerics::{finite_diff_check, rng_for, GradcheckReport, Init, ParamStore, ParamStoreBuilder, Slot};
use crate::voxel::{OccupancyMask, SparseVoxelGrid, VoxelCoord, CENTER_SLOT};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockCheckConfig {
    pub kind: BlockKind,
    pub voxels: usize,
    pub channels: usize,
    pub heads: usize,
    pub m: usize,
    pub d: usize,
    pub options: CodedOptions,
    pub step: f64,
    /// `None` checks every coordinate.
    pub samples: Option<usize>,
    pub seed: u64,
}

impl Default for BlockCheckConfig {
    fn default() -> Self {
        Self {
            kind: BlockKind::Coded,
            voxels: 20,
            channels: 8,
            heads: 2,
            m: 2,
            d: 2,
            options: CodedOptions::default(),
            step: 1e-5,
            samples: None,
            seed: 0,
        }
    }
}

/// A block, its parameters (with the input features as the last slice named
/// `input`) and the geometry it runs on.
#[derive(Debug, Clone)]
pub struct BlockFixture {
    pub block: Block,
    pub store: ParamStore,
    pub input: Slot,
    pub geometry: LevelGeometry,
    /// Upstream weights `r` of the scalar loss `sum(r * out)`.
    pub upstream: Vec<f64>,
}

/// `n` distinct coordinates packed into a box of roughly `2 n` cells so that
/// most voxels have neighbors at dilations 1 and 2.
pub fn random_cluster(n: usize, seed: u64) -> Vec<VoxelCoord> {
    let mut rng = rng_for(seed, "gradcheck-grid");
    let side = ((2 * n) as f64).cbrt().ceil().max(2.0) as i32;
    let mut all: Vec<VoxelCoord> = (0..side)
        .flat_map(|i| (0..side).flat_map(move |j| (0..side).map(move |k| VoxelCoord::new(i, j, k))))
        .collect();
    all.shuffle(&mut rng);
    all.truncate(n);
    all
}

/// Random region masks, each with the centre bit and at least three slots.
pub fn random_codebook(m: usize, d: usize, seed: u64) -> Result<RegionCodebook> {
    let mut rng = rng_for(seed, "gradcheck-codebook");
    let masks = (0..m * d)
        .map(|_| {
            let bits: u32 = rng.gen::<u32>() & OccupancyMask::FULL.0;
            OccupancyMask(bits | (1 << CENTER_SLOT) | (1 << 4) | (1 << 22))
        })
        .collect();
    RegionCodebook::new(m, d, (1..=d as u32).collect(), masks)
}

impl BlockFixture {
    pub fn new(cfg: &BlockCheckConfig) -> Result<Self> {
        let coords = random_cluster(cfg.voxels, cfg.seed);
        let n = coords.len();
        let grid = SparseVoxelGrid::new(coords, vec![0.0; n], 1, None, 1, 1.0)?;
        let mut b = ParamStoreBuilder::new(cfg.seed);
        let block = match cfg.kind {
            BlockKind::Conv => Block::Conv(ConvBlock::register(&mut b, "blk", cfg.channels, cfg.heads)?),
            BlockKind::Vanilla => Block::Vanilla(VanillaBlock::register(&mut b, "blk", cfg.channels, cfg.heads)?),
            BlockKind::Coded => {
                let cb = random_codebook(cfg.m, cfg.d, cfg.seed)?;
                Block::Coded(CodedBlock::register(&mut b, "blk", cfg.channels, cfg.heads, cb, cfg.options)?)
            }
        };
        let input = b.add("input", &[n, cfg.channels], Init::Normal { std: 1.0 });
        let mut store = b.build();
        // Move every slice off its structured initial value (unit scales,
        // zero biases) so that no gradient term is trivially absent.
        let mut rng = rng_for(cfg.seed, "gradcheck-jitter");
        for s in store.slices().to_vec() {
            if s.name.ends_with(".temperature") {
                continue;
            }
            for v in store.get_mut(s.slot()) {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let geometry = LevelGeometry::build(&grid, &block.dilations())?;
        let upstream = (0..n * cfg.channels).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Ok(Self { block, store, input, geometry, upstream })
    }

    pub fn loss(&self, store: &ParamStore) -> Result<f64> {
        let params = store.values();
        let out = self.block.forward(params, self.input.of(params), &self.geometry)?;
        Ok(out.iter().zip(&self.upstream).map(|(a, b)| a * b).sum())
    }

    /// Analytic gradient over the whole store, input slice included.
    pub fn gradient(&self, store: &ParamStore) -> Result<Vec<f64>> {
        let params = store.values();
        let (_, cache) = self.block.forward_train(params, self.input.of(params), &self.geometry)?;
        let mut grads = vec![0.0; params.len()];
        let dx = self.block.backward(params, &self.geometry, &cache, &self.upstream, &mut grads)?;
        for (g, v) in self.input.of_mut(&mut grads).iter_mut().zip(dx) {
            *g += v;
        }
        Ok(grads)
    }
}

/// Runs one finite-difference sweep for `cfg`.
pub fn check_block(cfg: &BlockCheckConfig) -> Result<GradcheckReport> {
    let fx = BlockFixture::new(cfg)?;
    let analytic = fx.gradient(&fx.store)?;
    finite_diff_check(|s| fx.loss(s).unwrap_or(f64::NAN), &fx.store, &analytic, cfg.step, cfg.samples, cfg.seed)
}
