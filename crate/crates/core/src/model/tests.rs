use std::time::Instant;

use super::*;
use crate::attention::BlockKind;
use crate::numerics::AdamConfig;
use crate::patterns::{build_region_codebook, BuildConfig};
use crate::synth::{make_corpus, CorpusConfig};

fn tiny_corpus(scenes: usize, seed: u64) -> CorpusConfig {
    CorpusConfig {
        scenes,
        seed,
        room: [1.6, 1.6],
        wall_height: 0.8,
        extra_min: 1,
        extra_max: 2,
        ..Default::default()
    }
}

fn tiny_model(kind: BlockKind) -> ModelConfig {
    ModelConfig { channels: vec![4, 8], m: 2, d: 2, kind, ..Default::default() }
}

fn prepared(model: &Model, corpus: &CorpusConfig) -> (Vec<SceneData>, Vec<SceneData>) {
    let c = make_corpus(corpus).unwrap();
    let f = |s: &crate::synth::Scene| model.prepare(&s.points).unwrap();
    (c.train.iter().map(f).collect(), c.val.iter().map(f).collect())
}

fn regions_for(cfg: &ModelConfig, corpus: &CorpusConfig) -> crate::patterns::RegionSet {
    let c = make_corpus(corpus).unwrap();
    let grids: Vec<_> = c
        .train
        .iter()
        .map(|s| scene_grid(&s.points, cfg.voxel_size, cfg.height_scale).unwrap())
        .collect();
    let mut b = BuildConfig::new(cfg.m, cfg.d, cfg.strides(), 1);
    b.sample_count = Some(500);
    build_region_codebook(&grids, &b).unwrap()
}

#[test]
fn parameter_count_closed_form() {
    for kind in [BlockKind::Conv, BlockKind::Vanilla, BlockKind::Coded] {
        for channels in [vec![16, 32], vec![8], vec![8, 16, 32]] {
            for blocks in [1, 2] {
                let cfg = ModelConfig { channels: channels.clone(), blocks, kind, regions: RegionSource::CodebookOnly, ..Default::default() };
                let m = Model::build(&cfg, None).unwrap();
                assert_eq!(m.param_count(), Model::expected_param_count(&cfg));
            }
        }
    }
    let conv = ModelConfig { kind: BlockKind::Conv, ..Default::default() };
    let k1 = ModelConfig { m: 1, d: 1, regions: RegionSource::CodebookOnly, ..Default::default() };
    assert_eq!(Model::expected_param_count(&conv), Model::expected_param_count(&k1));
    // Default two-level coded model.
    assert_eq!(Model::expected_param_count(&ModelConfig::default()), 8953);
}

#[test]
fn mined_model_requires_regions() {
    assert!(Model::build(&ModelConfig::default(), None).is_err());
}

#[test]
fn whole_model_gradient() {
    let corpus = tiny_corpus(2, 3);
    for kind in [BlockKind::Coded, BlockKind::Vanilla, BlockKind::Conv] {
        let cfg = tiny_model(kind);
        let regions = regions_for(&cfg, &corpus);
        let model = Model::build(&cfg, Some(&regions)).unwrap();
        let (train, _) = prepared(&model, &corpus);
        let data = &train[0];
        let (_, g) = model.loss_and_grad(model.store.values(), data).unwrap();
        // Mixed tolerance: many composite-model gradients are ~1e-7, where
        // central differences carry ~1e-10 of rounding noise.
        let mut rng = crate::numerics::rng_for(kind as u64, "probe");
        let mut probe = model.store.clone();
        for _ in 0..300 {
            let i = rand::Rng::gen_range(&mut rng, 0..g.len());
            let base = probe.values()[i];
            let h = 1e-5;
            probe.values_mut()[i] = base + h;
            let up = model.loss_at(probe.values(), data).unwrap();
            probe.values_mut()[i] = base - h;
            let dn = model.loss_at(probe.values(), data).unwrap();
            probe.values_mut()[i] = base;
            let fd = (up - dn) / (2.0 * h);
            let name = &model.store.slice_of(i).unwrap().name;
            assert!((g[i] - fd).abs() <= 1e-4 * g[i].abs().max(fd.abs()) + 1e-8, "{kind:?} {name}[{i}]: {} vs {fd}", g[i]);
        }
    }
}

#[test]
fn conv_and_single_element_codebook_train_identically() {
    let corpus = tiny_corpus(3, 1);
    let conv_cfg = ModelConfig { kind: BlockKind::Conv, ..tiny_model(BlockKind::Conv) };
    let k1_cfg = ModelConfig { m: 1, d: 1, regions: RegionSource::CodebookOnly, ..tiny_model(BlockKind::Coded) };
    let mut conv = Model::build(&conv_cfg, None).unwrap();
    let mut k1 = Model::build(&k1_cfg, None).unwrap();
    assert_eq!(conv.store.values(), k1.store.values());
    let (train, _) = prepared(&conv, &corpus);
    let tc = TrainConfig { epochs: 3, batch: 1, validate: false, ..Default::default() };
    let a = train_model(&mut conv, &train, &tc);
    let b = train_model(&mut k1, &train, &tc);
    assert_eq!(a, b);
    assert_eq!(conv.store.values(), k1.store.values());
}

fn train_model(m: &mut Model, scenes: &[SceneData], tc: &TrainConfig) -> Vec<f64> {
    train(m, scenes, &[], tc, None).unwrap().epochs.iter().map(|e| e.train_loss).collect()
}

#[test]
fn zero_learning_rate_keeps_loss_constant() {
    let corpus = tiny_corpus(2, 2);
    let cfg = ModelConfig { regions: RegionSource::CodebookOnly, ..tiny_model(BlockKind::Coded) };
    let mut m = Model::build(&cfg, None).unwrap();
    let (train_set, _) = prepared(&m, &corpus);
    let tc = TrainConfig {
        epochs: 3,
        batch: 2,
        validate: false,
        optimizer: AdamConfig { lr: 0.0, ..Default::default() },
    };
    let losses = train_model(&mut m, &train_set, &tc);
    assert!(losses.iter().all(|l| (l - losses[0]).abs() < 1e-6), "{losses:?}");
}

#[test]
fn first_step_reduces_loss() {
    let mut decreased = 0;
    for seed in 0..20 {
        let corpus = tiny_corpus(2, 100 + seed);
        let cfg = ModelConfig { seed, regions: RegionSource::CodebookOnly, ..tiny_model(BlockKind::Coded) };
        let mut m = Model::build(&cfg, None).unwrap();
        let (scenes, _) = prepared(&m, &corpus);
        let batch = &scenes[..1];
        let before = m.loss_at(m.store.values(), &batch[0]).unwrap();
        let tc = TrainConfig {
            epochs: 1,
            batch: 1,
            validate: false,
            optimizer: AdamConfig { lr: 1e-3, ..Default::default() },
        };
        train(&mut m, batch, &[], &tc, None).unwrap();
        if m.loss_at(m.store.values(), &batch[0]).unwrap() < before {
            decreased += 1;
        }
    }
    assert!(decreased >= 19, "{decreased}/20");
}

#[test]
fn checkpoints_are_reproducible_and_reload() {
    let corpus = tiny_corpus(2, 5);
    let cfg = tiny_model(BlockKind::Coded);
    let regions = regions_for(&cfg, &corpus);
    let a = Model::build(&cfg, Some(&regions)).unwrap();
    let b = Model::build(&cfg, Some(&regions)).unwrap();
    let bytes = a.to_checkpoint().unwrap().to_bytes().unwrap();
    assert_eq!(bytes, b.to_checkpoint().unwrap().to_bytes().unwrap());
    let ck = crate::numerics::checkpoint::Checkpoint::from_bytes(&bytes).unwrap();
    let back = Model::from_checkpoint(&ck).unwrap();
    for (x, y) in back.store.values().iter().zip(a.store.values()) {
        assert_eq!(*x, *y as f32 as f64);
    }
    assert_eq!(back.regions(), a.regions());
    let (scenes, _) = prepared(&a, &corpus);
    let la = a.loss_at(a.store.values(), &scenes[0]).unwrap();
    let lb = back.loss_at(back.store.values(), &scenes[0]).unwrap();
    assert!((la - lb).abs() < 1e-5);
}

#[test]
#[ignore]
fn timing_probe() {
    let corpus = CorpusConfig::default();
    let cfg = ModelConfig::default();
    let regions = regions_for(&cfg, &corpus);
    let m = Model::build(&cfg, Some(&regions)).unwrap();
    let (train_set, val) = prepared(&m, &corpus);
    let sizes: Vec<usize> = train_set.iter().map(|s| s.len()).collect();
    println!("voxels {sizes:?} val {:?} params {}", val.iter().map(|s| s.len()).collect::<Vec<_>>(), m.param_count());
    let t = Instant::now();
    for s in &train_set {
        m.loss_and_grad(m.store.values(), s).unwrap();
    }
    println!("one epoch fwd+bwd: {:?}", t.elapsed());
}
