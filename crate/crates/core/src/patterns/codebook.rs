use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::collect::collect_patterns;
use super::kmodes::{kmodes, ClusterReport, KModesConfig};
use crate::voxel::{OccupancyMask, SparseVoxelGrid};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub m: usize,
    pub d: usize,
    pub strides: Vec<u32>,
    /// Masks kept per (stride, dilation) after seeded subsampling.
    pub sample_count: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
}

impl BuildConfig {
    pub fn new(m: usize, d: usize, strides: Vec<u32>, seed: u64) -> Self {
        Self {
            m,
            d,
            strides,
            sample_count: Some(4000),
            restarts: 10,
            seed,
        }
    }
}

/// Mined geometric regions: `M` shapes for each dilation `1..=D` at every stride.
///
/// Within a stride, shape `i` at dilation 1 is ordered by cluster population
/// (largest first) and shape `i` at every other dilation is the centroid
/// matched to it by minimum total Hamming distance, so the shape axis means the
/// same thing across dilations.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    /// stride -> dilation index (1-based) -> M masks.
    pub strides: BTreeMap<u32, BTreeMap<u32, Vec<OccupancyMask>>>,
    /// stride -> dilation -> K-modes cost for M = 1..=m.
    pub cost_curve: BTreeMap<u32, BTreeMap<u32, Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct DilationsJson {
    dilations: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct RegionSetJson {
    strides: BTreeMap<String, DilationsJson>,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "D")]
    d: usize,
    seed: u64,
    #[serde(default)]
    cost_curve: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

fn parse_key(k: &str) -> Result<u32> {
    k.parse()
        .map_err(|_| Error::invalid(format!("region codebook key `{k}` is not an integer")))
}

impl RegionSet {
    /// Regions for one stride as `masks[shape][dilation_index]`, flattened
    /// shape-major (`k = i * D + j`).
    pub fn flat_masks(&self, stride: u32) -> Result<Vec<OccupancyMask>> {
        let per = self
            .strides
            .get(&stride)
            .ok_or_else(|| Error::invalid(format!("region codebook has no stride {stride}")))?;
        let mut out = Vec::with_capacity(self.m * self.d);
        for i in 0..self.m {
            for j in 1..=self.d as u32 {
                let masks = per
                    .get(&j)
                    .ok_or_else(|| Error::invalid(format!("stride {stride} lacks dilation {j}")))?;
                out.push(*masks.get(i).ok_or_else(|| {
                    Error::invalid(format!("stride {stride} dilation {j} has fewer than {} shapes", self.m))
                })?);
            }
        }
        Ok(out)
    }

    /// Every region the full 27-slot cube.
    pub fn full_cube(m: usize, d: usize, strides: &[u32]) -> Self {
        let per: BTreeMap<u32, Vec<OccupancyMask>> =
            (1..=d as u32).map(|j| (j, vec![OccupancyMask::FULL; m])).collect();
        Self {
            m,
            d,
            seed: 0,
            strides: strides.iter().map(|&s| (s, per.clone())).collect(),
            cost_curve: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d == 0 {
            return Err(Error::invalid("region codebook needs M >= 1 and D >= 1"));
        }
        for (&s, per) in &self.strides {
            if per.len() != self.d {
                return Err(Error::invalid(format!("stride {s} has {} dilations, expected {}", per.len(), self.d)));
            }
            for (&j, masks) in per {
                if masks.len() != self.m {
                    return Err(Error::invalid(format!(
                        "stride {s} dilation {j} has {} shapes, expected {}",
                        masks.len(),
                        self.m
                    )));
                }
                if let Some(bad) = masks.iter().find(|m| !m.contains(13) || m.bits() >> 27 != 0) {
                    return Err(Error::invalid(format!(
                        "stride {s} dilation {j}: region {} lacks the centre bit or exceeds 27 bits",
                        bad.to_bitstring()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let j = RegionSetJson {
            strides: self
                .strides
                .iter()
                .map(|(s, per)| {
                    let dilations = per
                        .iter()
                        .map(|(d, masks)| (d.to_string(), masks.iter().map(|m| m.to_bitstring()).collect()))
                        .collect();
                    (s.to_string(), DilationsJson { dilations })
                })
                .collect(),
            m: self.m,
            d: self.d,
            seed: self.seed,
            cost_curve: self
                .cost_curve
                .iter()
                .map(|(s, per)| (s.to_string(), per.iter().map(|(d, c)| (d.to_string(), c.clone())).collect()))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&j)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: RegionSetJson = serde_json::from_str(text)?;
        let mut strides = BTreeMap::new();
        for (s, per) in j.strides {
            let mut dil = BTreeMap::new();
            for (d, masks) in per.dilations {
                let parsed = masks
                    .iter()
                    .map(|b| OccupancyMask::from_bitstring(b))
                    .collect::<Result<Vec<_>>>()?;
                dil.insert(parse_key(&d)?, parsed);
            }
            strides.insert(parse_key(&s)?, dil);
        }
        let mut cost_curve = BTreeMap::new();
        for (s, per) in j.cost_curve {
            let mut dil = BTreeMap::new();
            for (d, c) in per {
                dil.insert(parse_key(&d)?, c);
            }
            cost_curve.insert(parse_key(&s)?, dil);
        }
        let set = Self {
            m: j.m,
            d: j.d,
            seed: j.seed,
            strides,
            cost_curve,
        };
        set.validate()?;
        Ok(set)
    }
}

/// Dilation-1 order: population descending, then mask value.
fn order_by_population(report: &ClusterReport) -> Vec<OccupancyMask> {
    let sizes = report.cluster_sizes();
    let mut idx: Vec<usize> = (0..report.m).collect();
    idx.sort_by_key(|&c| (std::cmp::Reverse(sizes[c]), report.centroids[c]));
    idx.into_iter().map(|c| report.centroids[c]).collect()
}

/// Permutes `centroids` to minimise total Hamming distance to `reference`
/// position by position. Exhaustive for up to 8 shapes, greedy beyond.
fn align_to(reference: &[OccupancyMask], centroids: &[OccupancyMask]) -> Vec<OccupancyMask> {
    let m = reference.len();
    let cost = |perm: &[usize]| -> u32 {
        perm.iter().enumerate().map(|(i, &p)| reference[i].hamming(centroids[p])).sum()
    };
    if m <= 8 {
        let mut perm: Vec<usize> = (0..m).collect();
        let mut best = perm.clone();
        let mut best_cost = cost(&perm);
        // Heap's algorithm, iterative form.
        let mut c = vec![0usize; m];
        let mut i = 0;
        while i < m {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                let k = cost(&perm);
                if k < best_cost || (k == best_cost && perm < best) {
                    best_cost = k;
                    best = perm.clone();
                }
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        best.into_iter().map(|p| centroids[p]).collect()
    } else {
        let mut used = vec![false; m];
        reference
            .iter()
            .map(|r| {
                let p = (0..m)
                    .filter(|&p| !used[p])
                    .min_by_key(|&p| (r.hamming(centroids[p]), p))
                    .expect("unused centroid");
                used[p] = true;
                centroids[p]
            })
            .collect()
    }
}

/// Collects masks and clusters them for every stride and dilation `1..=D`.
pub fn build_region_codebook(scenes: &[SparseVoxelGrid], cfg: &BuildConfig) -> Result<RegionSet> {
    if cfg.m == 0 || cfg.d == 0 {
        return Err(Error::invalid("region codebook needs M >= 1 and D >= 1"));
    }
    if cfg.strides.is_empty() {
        return Err(Error::invalid("at least one stride is required"));
    }
    let mut strides = BTreeMap::new();
    let mut curves = BTreeMap::new();
    for &stride in &cfg.strides {
        let mut per = BTreeMap::new();
        let mut curve = BTreeMap::new();
        let mut reference: Option<Vec<OccupancyMask>> = None;
        for j in 1..=cfg.d as u32 {
            let masks = collect_patterns(scenes, stride, j, cfg.sample_count, cfg.seed)?.masks;
            let base = KModesConfig {
                restarts: cfg.restarts,
                ..KModesConfig::new(cfg.m, cfg.seed)
            };
            let mut costs = Vec::with_capacity(cfg.m);
            let mut last = None;
            for m in 1..=cfg.m {
                let r = kmodes(&masks, &KModesConfig { clusters: m, ..base })?;
                costs.push(r.cost);
                last = Some(r);
            }
            let report = last.expect("m >= 1");
            let shapes = match &reference {
                None => {
                    let ordered = order_by_population(&report);
                    reference = Some(ordered.clone());
                    ordered
                }
                Some(r) => align_to(r, &report.centroids),
            };
            per.insert(j, shapes);
            curve.insert(j, costs);
        }
        strides.insert(stride, per);
        curves.insert(stride, curve);
    }
    let set = RegionSet {
        m: cfg.m,
        d: cfg.d,
        seed: cfg.seed,
        strides,
        cost_curve: curves,
    };
    set.validate()?;
    Ok(set)
}
