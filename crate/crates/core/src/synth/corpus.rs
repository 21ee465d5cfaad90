use std::collections::BTreeMap;

use log::warn;
use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::scene::{generate, Axis, Primitive, PrimitiveKind, SceneSpec};
use crate::numerics::{derive_seed, rng_for};
use crate::voxel::io::ScenePoint;
use crate::{Error, Result};

/// Distribution of room-like scenes: a ground floor, two boundary walls and
/// a random number of extra primitives drawn by kind weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub scenes: usize,
    pub train_ratio: f64,
    pub seed: u64,
    /// Room footprint in metres.
    pub room: [f64; 2],
    pub wall_height: f64,
    /// Translation of the whole scene. Keeps the floor and the boundary walls
    /// off voxel faces, where jitter would split them into two layers.
    pub offset: [f64; 3],
    /// Point spacing at the sensor, metres.
    pub spacing: f64,
    pub lambda: f64,
    pub sigma: f64,
    /// Ground floor and two boundary walls.
    pub structure: bool,
    pub extra_min: usize,
    pub extra_max: usize,
    pub kind_weights: BTreeMap<PrimitiveKind, f64>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            scenes: 10,
            train_ratio: 0.8,
            seed: 0,
            room: [4.0, 4.0],
            wall_height: 1.6,
            offset: [0.07, 0.07, 0.07],
            spacing: 0.12,
            lambda: 0.5,
            sigma: 0.01,
            structure: true,
            extra_min: 2,
            extra_max: 5,
            kind_weights: [
                (PrimitiveKind::Floor, 0.3),
                (PrimitiveKind::Wall, 0.15),
                (PrimitiveKind::Corner, 0.15),
                (PrimitiveKind::Edge, 0.2),
                (PrimitiveKind::Scatter, 0.2),
            ]
            .into_iter()
            .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub name: String,
    pub spec: SceneSpec,
    /// How many leading primitives are fixed structure rather than sampled.
    pub structural: usize,
    pub points: Vec<ScenePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub warnings: Vec<String>,
}

impl CorpusConfig {
    fn validate(&self) -> Result<()> {
        if self.scenes < 2 {
            return Err(Error::invalid(format!("corpus needs at least 2 scenes, got {}", self.scenes)));
        }
        if !(0.0..=1.0).contains(&self.train_ratio) {
            return Err(Error::invalid(format!("train ratio {} is outside [0, 1]", self.train_ratio)));
        }
        if self.extra_min > self.extra_max {
            return Err(Error::invalid("extra_min exceeds extra_max"));
        }
        if self.kind_weights.values().any(|w| !(*w >= 0.0)) || self.kind_weights.values().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("kind weights must be non-negative with a positive sum"));
        }
        if self.offset.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("scene offset must be finite"));
        }
        if self.room.iter().any(|r| !(*r > 0.0)) || !(self.wall_height > 0.0) {
            return Err(Error::invalid("room size and wall height must be positive"));
        }
        Ok(())
    }

    /// Scene `index` of the corpus; its seed depends only on `(seed, index)`.
    pub fn scene_spec(&self, index: usize) -> Result<(SceneSpec, usize)> {
        self.validate()?;
        let seed = derive_seed(self.seed, &format!("scene-{index}"));
        let mut rng = rng_for(seed, "layout");
        let [w, d] = self.room;
        let h = self.wall_height;
        let prim = |kind, origin, extent, axis| Primitive {
            kind,
            origin,
            extent,
            axis,
            spacing: self.spacing,
            label: PrimitiveKind::default_label(kind),
        };
        let mut primitives = Vec::new();
        if self.structure {
            primitives.push(prim(PrimitiveKind::Floor, [0.0, 0.0, 0.0], [w, d, 0.0], Axis::X));
            let y = if rng.gen_bool(0.5) { 0.0 } else { d };
            let x = if rng.gen_bool(0.5) { 0.0 } else { w };
            primitives.push(prim(PrimitiveKind::Wall, [0.0, y, 0.0], [w, 0.0, h], Axis::X));
            primitives.push(prim(PrimitiveKind::Wall, [x, 0.0, 0.0], [d, 0.0, h], Axis::Y));
        }
        let structural = primitives.len();
        let kinds: Vec<PrimitiveKind> = self.kind_weights.keys().copied().collect();
        let pick = WeightedIndex::new(self.kind_weights.values().copied()).map_err(|e| Error::invalid(e.to_string()))?;
        let extras = rng.gen_range(self.extra_min..=self.extra_max);
        for _ in 0..extras {
            let kind = kinds[pick.sample(&mut rng)];
            let axis = if rng.gen_bool(0.5) { Axis::X } else { Axis::Y };
            let mut at = |lo: f64, hi: f64| rng.gen_range(lo..hi);
            // Sizes and margins scale with the room so any footprint works.
            let span = w.min(d);
            let (mw, md) = (0.05 * w, 0.05 * d);
            let p = match kind {
                PrimitiveKind::Floor => {
                    let (a, b) = (at(0.15, 0.35) * w, at(0.15, 0.35) * d);
                    prim(kind, [at(mw, w - a - mw), at(md, d - b - md), at(0.25, 0.55) * h], [a, b, 0.0], axis)
                }
                PrimitiveKind::Wall => {
                    let len = at(0.25, 0.6) * match axis {
                        Axis::X => w,
                        Axis::Y => d,
                    };
                    let o = match axis {
                        Axis::X => [at(mw, w - len - mw), at(0.15 * d, 0.85 * d), 0.0],
                        Axis::Y => [at(0.15 * w, 0.85 * w), at(md, d - len - md), 0.0],
                    };
                    prim(kind, o, [len, 0.0, at(0.5, 1.0) * h], axis)
                }
                PrimitiveKind::Corner => {
                    let len = at(0.15, 0.35) * span;
                    prim(kind, [at(mw, w - len - mw), at(md, d - len - md), 0.0], [len, 0.0, at(0.5, 1.0) * h], axis)
                }
                PrimitiveKind::Edge => prim(kind, [at(mw, w - mw), at(md, d - md), 0.0], [0.0, 0.0, at(0.5, 1.0) * h], axis),
                PrimitiveKind::Scatter => {
                    let (a, b, c) = (at(0.08, 0.2) * w, at(0.08, 0.2) * d, at(0.2, 0.5) * h);
                    prim(kind, [at(mw, w - a - mw), at(md, d - b - md), 0.0], [a, b, c], axis)
                }
            };
            primitives.push(p);
        }
        let [ox, oy, oz] = self.offset;
        for p in &mut primitives {
            p.origin = [p.origin[0] + ox, p.origin[1] + oy, p.origin[2] + oz];
        }
        let spec = SceneSpec {
            primitives,
            center: [w / 2.0 + ox, d / 2.0 + oy],
            lambda: self.lambda,
            sigma: self.sigma,
            seed,
        };
        Ok((spec, structural))
    }
}

/// Seeded train/validation scene sets. Train scenes take indices
/// `0..n_train`, validation scenes the rest, so their seeds never overlap.
pub fn make_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.validate()?;
    let n_train = ((cfg.scenes as f64) * cfg.train_ratio).round() as usize;
    let mut warnings = Vec::new();
    if n_train == cfg.scenes {
        let msg = format!("train ratio {} leaves the validation set empty", cfg.train_ratio);
        warn!("{msg}");
        warnings.push(msg);
    }
    let mut train = Vec::with_capacity(n_train);
    let mut val = Vec::with_capacity(cfg.scenes - n_train);
    for i in 0..cfg.scenes {
        let (spec, structural) = cfg.scene_spec(i)?;
        let points = generate(&spec)?;
        let scene = Scene {
            name: format!("scene_{i:03}"),
            spec,
            structural,
            points,
        };
        if i < n_train {
            train.push(scene);
        } else {
            val.push(scene);
        }
    }
    Ok(Corpus { train, val, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let c = make_corpus(&CorpusConfig::default()).unwrap();
        assert_eq!((c.train.len(), c.val.len()), (8, 2));
        assert!(c.warnings.is_empty());
        let seeds: std::collections::BTreeSet<_> = c.train.iter().chain(&c.val).map(|s| s.spec.seed).collect();
        assert_eq!(seeds.len(), 10);

        let cfg = CorpusConfig { train_ratio: 1.0, scenes: 3, ..Default::default() };
        let c = make_corpus(&cfg).unwrap();
        assert!(c.val.is_empty() && c.warnings.len() == 1);
        assert!(make_corpus(&CorpusConfig { scenes: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn kind_histogram_follows_weights() {
        let cfg = CorpusConfig { scenes: 100, ..Default::default() };
        let total: f64 = cfg.kind_weights.values().sum();
        let mut counts: BTreeMap<PrimitiveKind, usize> = BTreeMap::new();
        let mut n = 0;
        for i in 0..cfg.scenes {
            let (spec, structural) = cfg.scene_spec(i).unwrap();
            for p in &spec.primitives[structural..] {
                *counts.entry(p.kind).or_default() += 1;
                n += 1;
            }
        }
        for (kind, w) in &cfg.kind_weights {
            let got = *counts.get(kind).unwrap_or(&0) as f64 / n as f64;
            assert!((got - w / total).abs() < 0.05, "{kind:?}: {got} vs {}", w / total);
        }
    }

    #[test]
    fn corpus_is_reproducible() {
        let cfg = CorpusConfig { scenes: 3, ..Default::default() };
        assert_eq!(make_corpus(&cfg).unwrap(), make_corpus(&cfg).unwrap());
    }

    #[test]
    fn ground_floor_fills_one_voxel_layer() {
        let cfg = CorpusConfig { scenes: 2, ..Default::default() };
        let c = make_corpus(&cfg).unwrap();
        let s = &c.train[0];
        let floor = s.spec.primitives[0].origin[2];
        let layers: std::collections::BTreeSet<i64> = s
            .points
            .iter()
            .filter(|p| (p.position[2] - floor).abs() < 0.05)
            .map(|p| (p.position[2] / 0.2).floor() as i64)
            .collect();
        assert_eq!(layers.into_iter().collect::<Vec<_>>(), vec![0]);
    }
}
