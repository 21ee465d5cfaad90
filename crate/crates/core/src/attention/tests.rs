use std::collections::BTreeMap;

use rand::Rng;

use super::gradcheck::{check_block, random_cluster, BlockCheckConfig, BlockFixture};
use super::*;
use crate::numerics::{rng_for, ParamStoreBuilder};
use crate::voxel::{NeighborOffsets, SparseVoxelGrid, VoxelCoord, NUM_SLOTS};
use crate::Error;

/// Direct 27-tap convolution of `g` with a per-head kernel, by coordinate lookup.
fn naive_conv(coords: &[VoxelCoord], g: &[f64], channels: usize, heads: usize, kernel: &[f64]) -> Vec<f64> {
    let at: BTreeMap<VoxelCoord, usize> = coords.iter().enumerate().map(|(r, &c)| (c, r)).collect();
    let hd = channels / heads;
    let mut y = vec![0.0; g.len()];
    for (i, c) in coords.iter().enumerate() {
        for o in 0..NUM_SLOTS {
            let [a, b, d] = NeighborOffsets::unit(o);
            let Some(&r) = at.get(&VoxelCoord::new(c.i + a, c.j + b, c.k + d)) else { continue };
            for h in 0..heads {
                for e in 0..hd {
                    y[i * channels + h * hd + e] += kernel[o * heads + h] * g[r * channels + h * hd + e];
                }
            }
        }
    }
    y
}

fn random_grid(n: usize, channels: usize, seed: u64) -> SparseVoxelGrid {
    let coords = random_cluster(n, seed);
    let mut rng = rng_for(seed, "features");
    let feats = (0..coords.len() * channels).map(|_| rng.gen_range(-1.0..1.0)).collect();
    SparseVoxelGrid::new(coords, feats, channels, None, 1, 1.0).unwrap()
}

fn coded(seed: u64, channels: usize, heads: usize, cb: RegionCodebook, options: CodedOptions) -> (Block, Vec<f64>) {
    let mut b = ParamStoreBuilder::new(seed);
    let blk = CodedBlock::register(&mut b, "blk", channels, heads, cb, options).unwrap();
    (Block::Coded(blk), b.build().values().to_vec())
}

#[test]
fn coded_block_gradients_match_finite_differences() {
    for seed in 0..3 {
        let r = check_block(&BlockCheckConfig { seed, ..Default::default() }).unwrap();
        assert!(r.max_rel_error < 1e-4, "seed {seed}: {r:#?}");
        assert!(r.checked > 500);
    }
}

#[test]
fn other_kinds_and_options_pass_gradcheck() {
    let mut cases = vec![
        BlockCheckConfig { kind: BlockKind::Conv, ..Default::default() },
        BlockCheckConfig { kind: BlockKind::Vanilla, ..Default::default() },
        BlockCheckConfig { m: 1, d: 1, ..Default::default() },
        BlockCheckConfig { m: 3, d: 1, ..Default::default() },
    ];
    let mut c = BlockCheckConfig::default();
    c.options.renormalize = true;
    cases.push(c.clone());
    c.options.guidance = false;
    cases.push(c.clone());
    c.options.renormalize = false;
    c.options.choice = ChoiceMode::FrozenRandom { seed: 3 };
    cases.push(c.clone());
    c.options.guidance = true;
    c.options.temperature = 0.4;
    cases.push(c);
    for cfg in cases {
        let r = check_block(&cfg).unwrap();
        assert!(r.max_rel_error < 1e-4, "{cfg:?}: {r:#?}");
    }
}

#[test]
fn tiny_single_parameter_check() {
    let cfg = BlockCheckConfig { voxels: 3, channels: 2, heads: 1, ..Default::default() };
    let fx = BlockFixture::new(&cfg).unwrap();
    let g = fx.gradient(&fx.store).unwrap();
    let slot = fx.store.slice("blk.prototypes").unwrap().slot();
    let idx = (slot.offset..slot.offset + slot.len).find(|&i| g[i].abs() > 1e-3).unwrap();
    let h = 1e-5;
    let mut plus = fx.store.clone();
    plus.values_mut()[idx] += h;
    let mut minus = fx.store.clone();
    minus.values_mut()[idx] -= h;
    let fd = (fx.loss(&plus).unwrap() - fx.loss(&minus).unwrap()) / (2.0 * h);
    assert!(crate::numerics::relative_error(g[idx], fd) < 1e-6);
}

#[test]
fn constant_loss_has_zero_gradient() {
    let mut fx = BlockFixture::new(&BlockCheckConfig::default()).unwrap();
    fx.upstream.iter_mut().for_each(|v| *v = 0.0);
    assert!(fx.gradient(&fx.store).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn backward_without_trace_fails() {
    let fx = BlockFixture::new(&BlockCheckConfig::default()).unwrap();
    let mut grads = vec![0.0; fx.store.len()];
    let err = fx
        .block
        .backward(fx.store.values(), &fx.geometry, &BlockCache::default(), &fx.upstream, &mut grads)
        .unwrap_err();
    assert!(matches!(err, Error::MissingTrace));
}

#[test]
fn single_element_codebook_is_a_convolution() {
    for seed in 0..10 {
        let (c, h) = (8, 2);
        let grid = random_grid(40, c, seed);
        let (block, params) = coded(seed, c, h, RegionCodebook::single_full(), CodedOptions::default());
        let geom = LevelGeometry::build(&grid, &block.dilations()).unwrap();
        let pl = block.plumbing();
        let pre = pl.pre(&params, grid.features()).unwrap();
        let Block::Coded(cb) = &block else { unreachable!() };
        let y = naive_conv(grid.coords(), &pre.g, c, h, cb.prototypes.of(&params));
        let (expect, _) = pl.post(&params, grid.features(), &y);
        let got = block.forward(&params, grid.features(), &geom).unwrap();
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }

        // The dedicated convolution block built from the same seed is identical.
        let mut b = ParamStoreBuilder::new(seed);
        let conv = Block::Conv(ConvBlock::register(&mut b, "blk", c, h).unwrap());
        let cparams = b.build().values().to_vec();
        assert_eq!(cparams, params);
        assert_eq!(conv.forward(&cparams, grid.features(), &geom).unwrap(), got);
    }
}

#[test]
fn parameter_counts_match_registration() {
    let (c, h) = (16, 2);
    let mut b = ParamStoreBuilder::new(0);
    ConvBlock::register(&mut b, "a", c, h).unwrap();
    assert_eq!(b.build().len(), ConvBlock::param_count(c, h));
    let mut b = ParamStoreBuilder::new(0);
    VanillaBlock::register(&mut b, "a", c, h).unwrap();
    assert_eq!(b.build().len(), VanillaBlock::param_count(c, h));
    for (m, d, guidance) in [(1, 1, true), (8, 3, true), (8, 3, false), (2, 1, true)] {
        let mut b = ParamStoreBuilder::new(0);
        let cb = RegionCodebook::codebook_only(m, d).unwrap();
        let opts = CodedOptions { guidance, ..Default::default() };
        CodedBlock::register(&mut b, "a", c, h, cb, opts).unwrap();
        assert_eq!(b.build().len(), CodedBlock::param_count(c, h, m * d, guidance));
    }
    assert_eq!(CodedBlock::param_count(c, h, 1, true), ConvBlock::param_count(c, h));
}

#[test]
fn entries_outside_regions_never_matter() {
    let fx = BlockFixture::new(&BlockCheckConfig::default()).unwrap();
    let Block::Coded(b) = &fx.block else { unreachable!() };
    let base = fx.loss(&fx.store).unwrap();
    let mut store = fx.store.clone();
    let h = fx.block.plumbing().heads;
    let mut changed = 0;
    for k in 0..b.codebook.k() {
        for o in 0..NUM_SLOTS {
            if !b.codebook.mask(k).contains(o) {
                for hh in 0..h {
                    store.values_mut()[b.prototypes.offset + (k * NUM_SLOTS + o) * h + hh] = 1e3;
                    changed += 1;
                }
            }
        }
    }
    assert!(changed > 0);
    assert_eq!(fx.loss(&store).unwrap(), base);
}

#[test]
fn frozen_uniform_choice_is_the_mean_prototype_kernel() {
    let (c, h, m) = (8, 2, 4);
    let grid = random_grid(30, c, 9);
    let masks: Vec<_> = (0..m).map(|s| crate::voxel::OccupancyMask(0x7ff_ffff >> (s * 3) | 1 << 13)).collect();
    let cb = RegionCodebook::new(m, 1, vec![1], masks).unwrap();
    let opts = CodedOptions { guidance: false, choice: ChoiceMode::FrozenUniform, ..Default::default() };
    let (block, params) = coded(4, c, h, cb.clone(), opts);
    let geom = LevelGeometry::build(&grid, &[1]).unwrap();
    let Block::Coded(b) = &block else { unreachable!() };
    let theta = ops::masked_prototypes(&cb, b.prototypes.of(&params), h);
    let mut mean = vec![0.0; NUM_SLOTS * h];
    for blk in theta.chunks_exact(NUM_SLOTS * h) {
        for (a, v) in mean.iter_mut().zip(blk) {
            *a += v / m as f64;
        }
    }
    let pl = block.plumbing();
    let pre = pl.pre(&params, grid.features()).unwrap();
    let (expect, _) = pl.post(&params, grid.features(), &naive_conv(grid.coords(), &pre.g, c, h, &mean));
    let got = block.forward(&params, grid.features(), &geom).unwrap();
    for (a, b) in got.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn trace_is_a_distribution_per_voxel() {
    let fx = BlockFixture::new(&BlockCheckConfig { m: 3, d: 2, ..Default::default() }).unwrap();
    let p = fx.store.values();
    let t = fx.block.trace(p, fx.input.of(p), &fx.geometry).unwrap().unwrap();
    assert_eq!(t.len(), 20);
    for i in 0..t.len() {
        let w = t.w_row(i);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12 && w.iter().all(|&v| v >= 0.0));
        let wp: f64 = t.w_prime[i * 6..(i + 1) * 6].iter().sum();
        assert!((wp - 1.0).abs() < 1e-12);
        assert!(t.w_f_row(i).iter().sum::<f64>() <= 1.0 + 1e-12);
    }
}

#[test]
fn canonical_order_makes_outputs_follow_coordinates() {
    let (c, h) = (4, 2);
    let grid = random_grid(25, c, 2);
    let mut rows: Vec<usize> = (0..grid.len()).collect();
    rows.reverse();
    let coords: Vec<_> = rows.iter().map(|&r| grid.coords()[r]).collect();
    let feats: Vec<f64> = rows.iter().flat_map(|&r| grid.feature_row(r).to_vec()).collect();
    let shuffled = SparseVoxelGrid::new(coords, feats, c, None, 1, 1.0).unwrap();
    let cb = super::gradcheck::random_codebook(2, 2, 0).unwrap();
    let (block, params) = coded(1, c, h, cb, CodedOptions::default());
    let run = |g: &SparseVoxelGrid| {
        let geom = LevelGeometry::build(g, &block.dilations()).unwrap();
        let out = block.forward(&params, g.features(), &geom).unwrap();
        g.coords().iter().copied().zip(out.chunks(c).map(|r| r.to_vec())).collect::<BTreeMap<_, _>>()
    };
    assert_eq!(run(&grid), run(&shuffled));
}

#[test]
fn zero_prototypes_leave_only_the_residual() {
    let (c, h) = (4, 1);
    let grid = random_grid(15, c, 5);
    let cb = super::gradcheck::random_codebook(2, 1, 0).unwrap();
    let (block, mut params) = coded(1, c, h, cb, CodedOptions::default());
    let Block::Coded(b) = &block else { unreachable!() };
    b.prototypes.of_mut(&mut params).fill(0.0);
    let geom = LevelGeometry::build(&grid, &block.dilations()).unwrap();
    assert_eq!(block.forward(&params, grid.features(), &geom).unwrap(), grid.features());
}
