use proptest::prelude::*;

use super::*;
use crate::attention::{BlockKind, BlockTrace, RegionCodebook};
use crate::model::{Model, ModelConfig, RegionSource, RunConfig, TrainConfig};
use crate::synth::CorpusConfig;
use crate::voxel::OccupancyMask;

fn tiny_run(kind: BlockKind, regions: RegionSource) -> RunConfig {
    RunConfig {
        model: ModelConfig { channels: vec![4, 8], m: 2, d: 2, kind, regions, ..Default::default() },
        train: TrainConfig { epochs: 2, ..Default::default() },
        corpus: CorpusConfig {
            scenes: 3,
            train_ratio: 0.67,
            room: [1.6, 1.6],
            wall_height: 0.8,
            extra_min: 1,
            extra_max: 2,
            ..Default::default()
        },
        pattern_samples: 300,
        pattern_restarts: 2,
    }
}

fn trace(m: usize, d: usize, rows: &[Vec<f64>]) -> BlockTrace {
    let w_f: Vec<f64> = rows.concat();
    BlockTrace { m, d, heads: 1, w: w_f.clone(), w_prime: vec![1.0; w_f.len()], w_f, raw: vec![], projected: vec![] }
}

fn zero_prototypes(model: &mut Model) {
    let slots: Vec<_> = model.store.slices().iter().filter(|s| s.name.ends_with(".prototypes")).map(|s| s.slot()).collect();
    for s in slots {
        model.store.get_mut(s).fill(0.0);
    }
}

#[test]
fn zero_prototypes_give_uniform_choice() {
    let mut p = prepare(&tiny_run(BlockKind::Coded, RegionSource::Mined)).unwrap();
    zero_prototypes(&mut p.model);
    let profile = layer_entropy_profile(&p.model, &p.train).unwrap();
    assert_eq!(profile.len(), 3);
    for e in &profile {
        assert!((e.entropy - 1.0).abs() < 1e-12, "{e:?}");
        assert!((0.0..=1.0).contains(&e.entropy_fused));
    }
    assert_eq!(profile.iter().map(|e| e.depth).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn single_element_codebook_has_zero_entropy() {
    let mut cfg = tiny_run(BlockKind::Coded, RegionSource::CodebookOnly);
    cfg.model.m = 1;
    cfg.model.d = 1;
    let p = prepare(&cfg).unwrap();
    for e in layer_entropy_profile(&p.model, &p.train).unwrap() {
        assert_eq!(e.entropy, 0.0);
        assert_eq!(e.entropy_fused, 0.0);
    }
}

#[test]
fn non_coded_models_have_no_profile() {
    let p = prepare(&tiny_run(BlockKind::Conv, RegionSource::Mined)).unwrap();
    assert!(layer_entropy_profile(&p.model, &p.train).unwrap().is_empty());
    assert!(choice_map(&p.model, &p.train[0], None, ChoiceAxis::Shape).is_err());
}

#[test]
fn deep_layers_are_the_later_half() {
    let e = |x: f64| LayerEntropy { layer: String::new(), depth: 0, level: 0, entropy: 0.0, entropy_fused: x, voxels: 1 };
    assert!((deep_layer_entropy(&[e(0.9), e(0.4), e(0.2)]).unwrap() - 0.3).abs() < 1e-15);
    assert_eq!(deep_layer_entropy(&[e(0.7)]), Some(0.7));
    assert_eq!(deep_layer_entropy(&[]), None);
}

#[test]
fn one_hot_and_uniform_choice_maps() {
    // M = 2, D = 3; element k has shape k / 3 and dilation k % 3.
    let mut hot = vec![0.0; 6];
    hot[5] = 1.0;
    let t = trace(2, 3, &[hot.clone(), hot]);
    assert_eq!(choice_indices(&t, ChoiceAxis::Shape), vec![1, 1]);
    assert_eq!(choice_indices(&t, ChoiceAxis::Dilation), vec![2, 2]);
    let u = trace(2, 3, &[vec![1.0 / 6.0; 6]]);
    assert_eq!(choice_indices(&u, ChoiceAxis::Shape), vec![0]);
    assert_eq!(choice_indices(&u, ChoiceAxis::Dilation), vec![0]);
    // Marginals, not the joint argmax: shape 0 wins 0.3 + 0.3 against 0.4.
    let t = trace(2, 2, &[vec![0.3, 0.3, 0.4, 0.0]]);
    assert_eq!(choice_indices(&t, ChoiceAxis::Shape), vec![0]);
    assert_eq!(choice_indices(&t, ChoiceAxis::Dilation), vec![0]);
}

proptest! {
    #[test]
    fn choice_is_scale_invariant(row in prop::collection::vec(0.0f64..1.0, 6), scale in 1e-3f64..1e3) {
        let a = trace(3, 2, &[row.clone()]);
        let b = trace(3, 2, &[row.iter().map(|v| v * scale).collect()]);
        for axis in [ChoiceAxis::Shape, ChoiceAxis::Dilation] {
            prop_assert_eq!(choice_indices(&a, axis), choice_indices(&b, axis));
        }
    }
}

#[test]
fn plane_shapes_follow_dilation_one_support() {
    let plane = OccupancyMask::horizontal_plane();
    let centre = OccupancyMask::from_slots([13]);
    let column = OccupancyMask::from_slots([12, 13, 14]);
    let strip = OccupancyMask::from_slots([4, 13, 22]);
    // Shapes: plane, centre only, column, strip; the dilation-2 mask is ignored.
    let masks = vec![plane, OccupancyMask::FULL, centre, plane, column, plane, strip, column];
    let cb = RegionCodebook::new(4, 2, vec![1, 2], masks).unwrap();
    assert_eq!(plane_shapes(&cb), vec![0, 3]);
}

#[test]
fn exports_are_deterministic_and_well_formed() {
    let p = prepare(&tiny_run(BlockKind::Coded, RegionSource::Mined)).unwrap();
    let map = choice_map(&p.model, &p.train[0], None, ChoiceAxis::Dilation).unwrap();
    assert_eq!(map.layer, "enc0.b0");
    assert_eq!(map.coords.len(), p.train[0].len());
    assert!(map.choices.iter().all(|&c| c < 2));
    let (mut a, mut b) = (Vec::new(), Vec::new());
    map.write_ply(&mut a).unwrap();
    choice_map(&p.model, &p.train[0], None, ChoiceAxis::Dilation).unwrap().write_ply(&mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("property int choice"));
    assert!(text.contains(&format!("element vertex {}", map.coords.len())));
    let mut csv = Vec::new();
    map.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert!(csv.starts_with("i,j,k,x,y,z,choice\n"));
    assert_eq!(csv.lines().count(), map.coords.len() + 1);

    let named = choice_map(&p.model, &p.train[0], Some("enc1.b0"), ChoiceAxis::Shape).unwrap();
    assert_eq!(named.stride, 2);
    assert!(choice_map(&p.model, &p.train[0], Some("nope"), ChoiceAxis::Shape).is_err());

    let profile = layer_entropy_profile(&p.model, &p.train).unwrap();
    let mut out = Vec::new();
    write_entropy_csv(&mut out, &profile).unwrap();
    assert!(String::from_utf8(out).unwrap().starts_with("layer,depth,level,entropy,entropy_fused,voxels\n"));

    let r = adaptation_report(&p.model, &p.train, None).unwrap();
    let counted: usize = r.low_density_dilations.iter().chain(&r.high_density_dilations).sum();
    assert_eq!(counted, p.train.iter().map(|s| s.len()).sum::<usize>());
    let dens: Vec<Vec<f64>> = p.train.iter().zip(&p.corpus.train).map(|(d, s)| points_per_voxel(d, &s.points).unwrap()).collect();
    for (d, s) in dens.iter().zip(&p.corpus.train) {
        assert_eq!(d.iter().sum::<f64>() as usize, s.points.len());
        assert!(d.iter().all(|&c| c >= 1.0));
    }
    adaptation_report(&p.model, &p.train, Some(&dens)).unwrap();
    assert!(adaptation_report(&p.model, &p.train, Some(&dens[..1])).is_err());
}

#[test]
fn gap_rejects_mismatched_parameters() {
    let coded = tiny_run(BlockKind::Coded, RegionSource::Mined);
    let mut wide = coded.clone();
    wide.model.channels = vec![8, 16];
    assert!(matches!(generalization_gap(("a", &coded), ("b", &wide), &[1]), Err(crate::Error::Invalid(_))));
    assert!(check_param_match(&coded, &coded).unwrap() == 0.0);
}

#[test]
fn identical_configs_give_identical_curves() {
    let cfg = tiny_run(BlockKind::Coded, RegionSource::Mined);
    let rows = generalization_gap(("a", &cfg), ("b", &cfg), &[1]).unwrap();
    assert_eq!(rows.len(), 4);
    for (x, y) in rows[..2].iter().zip(&rows[2..]) {
        assert_eq!((x.train_accuracy, x.val_accuracy, x.gap), (y.train_accuracy, y.val_accuracy, y.gap));
        assert_eq!(x.train_scenes, 1);
    }
    let mut out = Vec::new();
    write_gap_csv(&mut out, &rows).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 5);
}

#[test]
fn random_baseline_needs_coded_blocks_and_keeps_layout() {
    let cfg = tiny_run(BlockKind::Coded, RegionSource::Mined);
    let rs = random_codebook_config(&cfg, 9).unwrap();
    assert_eq!(Model::expected_param_count(&rs.model), Model::expected_param_count(&cfg.model));
    assert!(random_codebook_config(&tiny_run(BlockKind::Vanilla, RegionSource::Mined), 9).is_err());
    let run = random_codebook_baseline(&cfg, 9, None).unwrap();
    assert_eq!(run.report.epochs.len(), 2);
}
