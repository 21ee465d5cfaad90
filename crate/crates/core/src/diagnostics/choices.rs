use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::{BlockTrace, RegionCodebook};
use crate::model::{Model, SceneData};
use crate::voxel::io::{write_vertex_ply, ScenePoint};
use crate::voxel::{OccupancyMask, VoxelCoord};
use crate::{Error, Result};

/// Which factor of the `K = M x D` codebook a choice map reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceAxis {
    Shape,
    Dilation,
}

impl FromStr for ChoiceAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shape" => Ok(Self::Shape),
            "dilation" => Ok(Self::Dilation),
            other => Err(Error::invalid(format!("unknown choice axis `{other}` (expected shape or dilation)"))),
        }
    }
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-voxel argmax of `w_f` marginalized over the other axis. Ties go to the
/// lowest index.
pub fn choice_indices(trace: &BlockTrace, axis: ChoiceAxis) -> Vec<usize> {
    let (m, d) = (trace.m, trace.d);
    (0..trace.len())
        .map(|i| {
            let row = trace.w_f_row(i);
            let marginal: Vec<f64> = match axis {
                ChoiceAxis::Shape => (0..m).map(|j| row[j * d..(j + 1) * d].iter().sum()).collect(),
                ChoiceAxis::Dilation => (0..d).map(|e| (0..m).map(|j| row[j * d + e]).sum()).collect(),
            };
            first_max(&marginal)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceMap {
    pub layer: String,
    pub axis: ChoiceAxis,
    pub stride: u32,
    pub voxel_size: f64,
    pub coords: Vec<VoxelCoord>,
    pub choices: Vec<usize>,
}

impl ChoiceMap {
    /// Voxel centres in scene units.
    pub fn positions(&self) -> Vec<[f64; 3]> {
        let s = self.voxel_size * self.stride as f64;
        self.coords
            .iter()
            .map(|c| [(c.i as f64 + 0.5) * s, (c.j as f64 + 0.5) * s, (c.k as f64 + 0.5) * s])
            .collect()
    }

    /// ASCII PLY with `x, y, z` and an int property `choice`.
    pub fn write_ply<W: Write>(&self, out: &mut W) -> Result<()> {
        let pos = self.positions();
        let mut floats: Vec<(&str, Vec<f64>)> = ["x", "y", "z"]
            .iter()
            .enumerate()
            .map(|(a, n)| (*n, pos.iter().map(|p| p[a]).collect()))
            .collect();
        let ints = [("choice", self.choices.iter().map(|&c| c as i64).collect())];
        write_vertex_ply(out, &mut floats, &ints)
    }

    /// CSV with header `i,j,k,x,y,z,choice`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "k", "x", "y", "z", "choice"])?;
        for ((c, p), ch) in self.coords.iter().zip(self.positions()).zip(&self.choices) {
            w.write_record([
                c.i.to_string(),
                c.j.to_string(),
                c.k.to_string(),
                p[0].to_string(),
                p[1].to_string(),
                p[2].to_string(),
                ch.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Choice map of the coded block `layer`, or of the first coded block.
pub fn choice_map(model: &Model, data: &SceneData, layer: Option<&str>, axis: ChoiceAxis) -> Result<ChoiceMap> {
    let traces = model.traces(data)?;
    let entry = match layer {
        Some(name) => traces.into_iter().find(|e| e.name == name),
        None => traces.into_iter().next(),
    }
    .ok_or_else(|| Error::invalid(format!("model has no coded block {}", layer.unwrap_or(""))))?;
    let level = &data.levels[entry.level];
    Ok(ChoiceMap {
        layer: entry.name,
        axis,
        stride: level.stride(),
        voxel_size: data.grid.voxel_size(),
        coords: level.coords().to_vec(),
        choices: choice_indices(&entry.trace, axis),
    })
}

/// Shapes whose dilation-1 support lies in the horizontal plane and covers
/// more than the centre.
pub fn plane_shapes(cb: &RegionCodebook) -> Vec<usize> {
    let plane = OccupancyMask::horizontal_plane();
    (0..cb.m())
        .filter(|&j| {
            let r = cb.mask(j * cb.d());
            r.popcount() > 1 && r.intersection_count(plane) == r.popcount()
        })
        .collect()
}

/// Choice statistics of the first coded block, aggregated over scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub layer: String,
    pub plane_shapes: Vec<usize>,
    /// Shape choices among floor voxels whose dilation-1 neighborhood is
    /// exactly the horizontal plane.
    pub floor_interior_shapes: Vec<usize>,
    pub floor_modal_shape: Option<usize>,
    pub plane_is_modal: bool,
    /// Median voxel density over all scenes.
    pub median_density: f64,
    pub low_density_dilations: Vec<usize>,
    pub high_density_dilations: Vec<usize>,
    pub low_modal_dilation: Option<usize>,
    pub high_modal_dilation: Option<usize>,
    pub sparse_prefers_larger_dilation: bool,
}

fn modal(hist: &[usize]) -> Option<usize> {
    if hist.iter().all(|&h| h == 0) {
        return None;
    }
    let mut best = 0;
    for (i, &h) in hist.iter().enumerate() {
        if h > hist[best] {
            best = i;
        }
    }
    Some(best)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Floor label used by the synthetic corpus.
pub const FLOOR_LABEL: u32 = 0;

/// Number of input points in each voxel of `data`'s stride-1 grid.
pub fn points_per_voxel(data: &SceneData, points: &[ScenePoint]) -> Result<Vec<f64>> {
    let size = data.grid.voxel_size();
    let mut counts = vec![0.0; data.len()];
    for p in points {
        let c = VoxelCoord::new(
            (p.position[0] / size).floor() as i32,
            (p.position[1] / size).floor() as i32,
            (p.position[2] / size).floor() as i32,
        );
        let row = data
            .grid
            .row_of(c)
            .ok_or_else(|| Error::structural("point falls outside the scene grid"))?;
        counts[row] += 1.0;
    }
    Ok(counts)
}

/// Shape choice on floor interiors and dilation choice by local density for
/// the first coded block, which must run at stride 1. `densities` holds one
/// value per stride-1 voxel of each scene (for example
/// [`points_per_voxel`]); without it the occupied-slot count of the
/// dilation-1 neighborhood is used.
pub fn adaptation_report(model: &Model, scenes: &[SceneData], densities: Option<&[Vec<f64>]>) -> Result<AdaptationReport> {
    if let Some(d) = densities {
        if d.len() != scenes.len() || d.iter().zip(scenes).any(|(v, s)| v.len() != s.len()) {
            return Err(Error::structural("need one density per voxel of every scene"));
        }
    }
    let (_, block) = model
        .blocks()
        .into_iter()
        .find(|(_, b)| b.as_coded().is_some())
        .ok_or_else(|| Error::invalid("model has no coded block"))?;
    let coded = block.as_coded().expect("coded");
    let cb = &coded.codebook;
    let planes = plane_shapes(cb);
    let plane = OccupancyMask::horizontal_plane();

    let mut per_scene = Vec::with_capacity(scenes.len());
    let mut all_density = Vec::new();
    for (si, data) in scenes.iter().enumerate() {
        let trace = model
            .traces(data)?
            .into_iter()
            .next()
            .filter(|e| e.level == 0)
            .ok_or_else(|| Error::invalid("first coded block does not run at stride 1"))?;
        let masks = data.levels[0].masks(1)?;
        let density: Vec<f64> = match densities {
            Some(d) => d[si].clone(),
            None => masks.iter().map(|m| m.popcount() as f64).collect(),
        };
        all_density.extend_from_slice(&density);
        let shapes = choice_indices(&trace.trace, ChoiceAxis::Shape);
        let dils = choice_indices(&trace.trace, ChoiceAxis::Dilation);
        per_scene.push((masks.to_vec(), density, shapes, dils, data.labels().map(|l| l.to_vec())));
    }
    let med = median(&mut all_density);

    let mut floor = vec![0; cb.m()];
    let mut low = vec![0; cb.d()];
    let mut high = vec![0; cb.d()];
    for (masks, density, shapes, dils, labels) in per_scene {
        for i in 0..masks.len() {
            if labels.as_ref().is_some_and(|l| l[i] == FLOOR_LABEL) && masks[i] == plane {
                floor[shapes[i]] += 1;
            }
            if density[i] < med {
                low[dils[i]] += 1;
            } else {
                high[dils[i]] += 1;
            }
        }
    }
    let floor_modal = modal(&floor);
    let (lo, hi) = (modal(&low), modal(&high));
    Ok(AdaptationReport {
        layer: coded.name.clone(),
        plane_is_modal: floor_modal.is_some_and(|s| planes.contains(&s)),
        plane_shapes: planes,
        floor_interior_shapes: floor,
        floor_modal_shape: floor_modal,
        median_density: med,
        low_density_dilations: low,
        high_density_dilations: high,
        low_modal_dilation: lo,
        high_modal_dilation: hi,
        sparse_prefers_larger_dilation: matches!((lo, hi), (Some(a), Some(b)) if a > b),
    })
}
