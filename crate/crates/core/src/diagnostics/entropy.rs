use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Model, SceneData};
use crate::numerics::normalized_entropy;
use crate::{Error, Result};

/// Mean normalized entropy of one coded block's choice distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntropy {
    pub layer: String,
    /// Position of the block in forward order.
    pub depth: usize,
    pub level: usize,
    /// Prototype-similarity choice `w`.
    pub entropy: f64,
    /// Fused choice `w_f`, renormalized per voxel.
    pub entropy_fused: f64,
    pub voxels: usize,
}

fn row_entropy(row: &[f64]) -> Result<f64> {
    let s: f64 = row.iter().sum();
    if !(s > 0.0) {
        return Err(Error::Numerical("choice row has no mass".into()));
    }
    let p: Vec<f64> = row.iter().map(|v| v / s).collect();
    normalized_entropy(&p)
}

/// Voxel-weighted mean over `scenes` of `entropy(w) / ln K` for every coded
/// block, in forward order. Non-coded models give an empty profile.
pub fn layer_entropy_profile(model: &Model, scenes: &[SceneData]) -> Result<Vec<LayerEntropy>> {
    let per_scene: Vec<Vec<(String, usize, f64, f64, usize)>> = scenes
        .par_iter()
        .map(|s| {
            model
                .traces(s)?
                .into_iter()
                .map(|e| {
                    let n = e.trace.len();
                    let (mut hw, mut hf) = (0.0, 0.0);
                    for i in 0..n {
                        hw += row_entropy(e.trace.w_row(i))?;
                        hf += row_entropy(e.trace.w_f_row(i))?;
                    }
                    Ok((e.name, e.level, hw, hf, n))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    // Fixed-order accumulation keeps the profile independent of thread count.
    let mut acc: BTreeMap<usize, LayerEntropy> = BTreeMap::new();
    for scene in per_scene {
        for (depth, (name, level, hw, hf, n)) in scene.into_iter().enumerate() {
            let e = acc.entry(depth).or_insert_with(|| LayerEntropy {
                layer: name,
                depth,
                level,
                entropy: 0.0,
                entropy_fused: 0.0,
                voxels: 0,
            });
            e.entropy += hw;
            e.entropy_fused += hf;
            e.voxels += n;
        }
    }
    Ok(acc
        .into_values()
        .map(|mut e| {
            let n = e.voxels.max(1) as f64;
            e.entropy /= n;
            e.entropy_fused /= n;
            e
        })
        .collect())
}

/// Mean fused entropy over the later half of the blocks (forward order).
pub fn deep_layer_entropy(profile: &[LayerEntropy]) -> Option<f64> {
    let deep = &profile[profile.len() / 2..];
    if deep.is_empty() {
        return None;
    }
    Some(deep.iter().map(|e| e.entropy_fused).sum::<f64>() / deep.len() as f64)
}

/// CSV with header `layer,depth,level,entropy,entropy_fused,voxels`.
pub fn write_entropy_csv<W: Write>(out: W, profile: &[LayerEntropy]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in profile {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
