use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::coord::{CoordMap, VoxelCoord};
use crate::{Error, Result};

/// A point handed to [`voxelize`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub position: [f64; 3],
    pub features: Vec<f64>,
    pub label: Option<u32>,
}

/// Occupied voxels with one dense feature row each, in canonical
/// (lexicographic) coordinate order.
#[derive(Debug, Clone)]
pub struct SparseVoxelGrid {
    coords: Vec<VoxelCoord>,
    features: Vec<f64>,
    channels: usize,
    labels: Option<Vec<u32>>,
    stride: u32,
    voxel_size: f64,
    lookup: CoordMap,
}

impl PartialEq for SparseVoxelGrid {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords
            && self.channels == other.channels
            && self.labels == other.labels
            && self.stride == other.stride
            && self.voxel_size.to_bits() == other.voxel_size.to_bits()
            && self.features.len() == other.features.len()
            && self
                .features
                .iter()
                .zip(&other.features)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl SparseVoxelGrid {
    /// Builds a grid from parts. Coordinates are sorted into canonical order;
    /// duplicates are rejected.
    pub fn new(
        coords: Vec<VoxelCoord>,
        features: Vec<f64>,
        channels: usize,
        labels: Option<Vec<u32>>,
        stride: u32,
        voxel_size: f64,
    ) -> Result<Self> {
        if stride == 0 || !stride.is_power_of_two() {
            return Err(Error::invalid(format!("stride {stride} is not a power of two")));
        }
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::invalid(format!("voxel size {voxel_size} must be positive")));
        }
        let n = coords.len();
        if features.len() != n * channels {
            return Err(Error::structural(format!(
                "{} feature values for {n} voxels x {channels} channels",
                features.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::structural(format!("{} labels for {n} voxels", l.len())));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&r| coords[r]);
        let sorted = order.windows(2).all(|w| w[0] < w[1]);
        let (coords, features, labels) = if sorted {
            (coords, features, labels)
        } else {
            let c: Vec<_> = order.iter().map(|&r| coords[r]).collect();
            let mut f = Vec::with_capacity(features.len());
            for &r in &order {
                f.extend_from_slice(&features[r * channels..(r + 1) * channels]);
            }
            let l = labels.map(|l| order.iter().map(|&r| l[r]).collect());
            (c, f, l)
        };
        if let Some(w) = coords.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::structural(format!("duplicate voxel coordinate {:?}", w[0])));
        }
        let mut lookup = CoordMap::with_capacity(n);
        for (r, c) in coords.iter().enumerate() {
            lookup.insert(*c, r as u32);
        }
        Ok(Self {
            coords,
            features,
            channels,
            labels,
            stride,
            voxel_size,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[VoxelCoord] {
        &self.coords
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Row-major `len() x channels()` feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, row: usize) -> &[f64] {
        &self.features[row * self.channels..(row + 1) * self.channels]
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    /// Edge length of a stride-1 voxel in meters.
    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn row_of(&self, c: VoxelCoord) -> Option<usize> {
        self.lookup.get(c).map(|r| r as usize)
    }

    pub(crate) fn lookup(&self) -> &CoordMap {
        &self.lookup
    }

    /// Same voxels with a different feature matrix.
    pub fn with_features(&self, features: Vec<f64>, channels: usize) -> Result<Self> {
        if features.len() != self.len() * channels {
            return Err(Error::structural(format!(
                "{} feature values for {} voxels x {channels} channels",
                features.len(),
                self.len()
            )));
        }
        Ok(Self {
            features,
            channels,
            ..self.clone()
        })
    }
}

fn point_order(a: &LabeledPoint, b: &LabeledPoint) -> Ordering {
    a.position
        .iter()
        .chain(&a.features)
        .zip(b.position.iter().chain(&b.features))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
        .then(a.label.cmp(&b.label))
}

/// Most frequent label; ties go to the smallest class id.
pub(crate) fn majority_label(labels: impl IntoIterator<Item = u32>) -> Option<u32> {
    let mut counts = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let mut best: Option<(u32, usize)> = None;
    for (l, c) in counts {
        if best.map_or(true, |(_, bc)| c > bc) {
            best = Some((l, c));
        }
    }
    best.map(|(l, _)| l)
}

/// Quantises points into voxels of edge `voxel_size`.
///
/// Points sharing a voxel are merged by the arithmetic mean of their features
/// and a majority vote on labels. Labels are kept only when every point has one.
/// The output does not depend on the order of `points`.
pub fn voxelize(points: &[LabeledPoint], voxel_size: f64) -> Result<SparseVoxelGrid> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::invalid(format!("voxel size {voxel_size} must be positive")));
    }
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("cannot voxelize an empty point list"))?;
    let channels = first.features.len();
    let all_labeled = points.iter().all(|p| p.label.is_some());

    let mut cells: BTreeMap<VoxelCoord, Vec<usize>> = BTreeMap::new();
    for (idx, p) in points.iter().enumerate() {
        if p.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinitePoint { index: idx });
        }
        if p.features.len() != channels {
            return Err(Error::structural(format!(
                "point {idx} has {} features, expected {channels}",
                p.features.len()
            )));
        }
        let mut q = [0i32; 3];
        for (a, v) in q.iter_mut().zip(p.position) {
            let f = (v / voxel_size).floor();
            if f < i32::MIN as f64 || f > i32::MAX as f64 {
                return Err(Error::invalid(format!(
                    "point {idx} falls outside the 32-bit voxel domain"
                )));
            }
            *a = f as i32;
        }
        cells
            .entry(VoxelCoord::new(q[0], q[1], q[2]))
            .or_default()
            .push(idx);
    }

    let n = cells.len();
    let mut coords = Vec::with_capacity(n);
    let mut features = Vec::with_capacity(n * channels);
    let mut labels = all_labeled.then(|| Vec::with_capacity(n));
    for (coord, mut members) in cells {
        // Canonical summation order keeps the mean bit-identical under input permutation.
        members.sort_by(|&a, &b| point_order(&points[a], &points[b]));
        let mut acc = vec![0.0; channels];
        for &m in &members {
            for (a, v) in acc.iter_mut().zip(&points[m].features) {
                *a += v;
            }
        }
        let inv = members.len() as f64;
        features.extend(acc.into_iter().map(|a| a / inv));
        if let Some(l) = labels.as_mut() {
            l.push(majority_label(members.iter().filter_map(|&m| points[m].label)).unwrap_or(0));
        }
        coords.push(coord);
    }
    SparseVoxelGrid::new(coords, features, channels, labels, 1, voxel_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::HashSet;

    fn pt(x: f64, y: f64, z: f64, f: f64, label: u32) -> LabeledPoint {
        LabeledPoint {
            position: [x, y, z],
            features: vec![f],
            label: Some(label),
        }
    }

    #[test]
    fn merges_points_in_one_voxel_by_mean() {
        let g = voxelize(&[pt(0.12, 0.05, 0.0, 1.0, 0), pt(0.18, 0.09, 0.02, 3.0, 0)], 0.1).unwrap();
        assert_eq!(g.coords(), &[VoxelCoord::new(1, 0, 0)]);
        assert_eq!(g.features(), &[2.0]);
    }

    #[test]
    fn single_point_is_identity() {
        let g = voxelize(&[pt(0.0, 0.0, 0.0, 4.5, 2)], 0.1).unwrap();
        assert_eq!(g.coords(), &[VoxelCoord::new(0, 0, 0)]);
        assert_eq!(g.features(), &[4.5]);
        assert_eq!(g.labels(), Some(&[2u32][..]));
    }

    #[test]
    fn majority_label_breaks_ties_to_smallest() {
        let pts = [
            pt(0.01, 0.0, 0.0, 0.0, 3),
            pt(0.02, 0.0, 0.0, 0.0, 1),
            pt(0.03, 0.0, 0.0, 0.0, 3),
            pt(0.04, 0.0, 0.0, 0.0, 1),
        ];
        assert_eq!(voxelize(&pts, 1.0).unwrap().labels(), Some(&[1u32][..]));
    }

    #[test]
    fn rejects_non_finite_with_index() {
        let pts = [pt(0.0, 0.0, 0.0, 0.0, 0), pt(f64::NAN, 0.0, 0.0, 0.0, 0)];
        match voxelize(&pts, 0.1) {
            Err(Error::NonFinitePoint { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_and_bad_size() {
        assert!(voxelize(&[], 0.1).is_err());
        assert!(voxelize(&[pt(0.0, 0.0, 0.0, 0.0, 0)], 0.0).is_err());
        assert!(voxelize(&[pt(0.0, 0.0, 0.0, 0.0, 0)], -1.0).is_err());
    }

    #[test]
    fn voxel_count_matches_hash_set_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..1000)
            .map(|_| pt(rng.gen(), rng.gen(), rng.gen(), 1.0, 0))
            .collect();
        let oracle: HashSet<(i64, i64, i64)> = pts
            .iter()
            .map(|p| {
                let [x, y, z] = p.position;
                ((x / 0.05).floor() as i64, (y / 0.05).floor() as i64, (z / 0.05).floor() as i64)
            })
            .collect();
        let g = voxelize(&pts, 0.05).unwrap();
        assert_eq!(g.len(), oracle.len());
        assert!(g.coords().windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn voxelization_is_permutation_invariant(
            raw in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0, -5.0f64..5.0, 0u32..4), 1..80),
            seed in any::<u64>(),
        ) {
            let pts: Vec<_> = raw.iter().map(|&(x, y, z, f, l)| pt(x, y, z, f, l)).collect();
            let mut shuffled = pts.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            prop_assert_eq!(voxelize(&pts, 0.3).unwrap(), voxelize(&shuffled, 0.3).unwrap());
        }
    }
}
