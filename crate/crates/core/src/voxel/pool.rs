use std::collections::BTreeMap;

use super::coord::VoxelCoord;
use super::grid::{majority_label, SparseVoxelGrid};
use crate::{Error, Result};

/// Fine-to-coarse row mapping produced by [`downsample`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelMapping {
    parent: Vec<u32>,
    coarse_len: usize,
}

impl VoxelMapping {
    /// Coarse row of each fine voxel.
    pub fn parents(&self) -> &[u32] {
        &self.parent
    }

    pub fn fine_len(&self) -> usize {
        self.parent.len()
    }

    pub fn coarse_len(&self) -> usize {
        self.coarse_len
    }
}

/// Halves the resolution: child coordinate `floor(c / 2)`, features max-pooled
/// per channel, labels by majority.
pub fn downsample(grid: &SparseVoxelGrid, factor: u32) -> Result<(SparseVoxelGrid, VoxelMapping)> {
    if factor != 2 {
        return Err(Error::invalid(format!("only factor 2 downsampling is supported, got {factor}")));
    }
    let stride = grid
        .stride()
        .checked_mul(2)
        .ok_or_else(|| Error::invalid("stride overflow"))?;
    let mut groups: BTreeMap<VoxelCoord, Vec<usize>> = BTreeMap::new();
    for (r, c) in grid.coords().iter().enumerate() {
        groups.entry(c.halved()).or_default().push(r);
    }
    let ch = grid.channels();
    let mut coords = Vec::with_capacity(groups.len());
    let mut features = Vec::with_capacity(groups.len() * ch);
    let mut labels = grid.labels().map(|_| Vec::with_capacity(groups.len()));
    let mut parent = vec![0u32; grid.len()];
    for (row, (coord, members)) in groups.into_iter().enumerate() {
        let mut pooled = vec![f64::NEG_INFINITY; ch];
        for &m in &members {
            parent[m] = row as u32;
            for (p, v) in pooled.iter_mut().zip(grid.feature_row(m)) {
                *p = p.max(*v);
            }
        }
        features.extend(pooled);
        if let (Some(out), Some(src)) = (labels.as_mut(), grid.labels()) {
            out.push(majority_label(members.iter().map(|&m| src[m])).unwrap_or(0));
        }
        coords.push(coord);
    }
    let coarse_len = coords.len();
    let coarse = SparseVoxelGrid::new(coords, features, ch, labels, stride, grid.voxel_size())?;
    Ok((coarse, VoxelMapping { parent, coarse_len }))
}

/// Copies each coarse row back onto its fine children. Returns a row-major
/// `mapping.fine_len() x coarse.channels()` matrix.
pub fn upsample(coarse: &SparseVoxelGrid, mapping: &VoxelMapping) -> Result<Vec<f64>> {
    if mapping.coarse_len != coarse.len() {
        return Err(Error::structural(format!(
            "mapping expects {} coarse voxels, grid has {}",
            mapping.coarse_len,
            coarse.len()
        )));
    }
    let mut out = Vec::with_capacity(mapping.fine_len() * coarse.channels());
    for &p in &mapping.parent {
        out.extend_from_slice(coarse.feature_row(p as usize));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn grid(coords: &[(i32, i32, i32)], feats: &[f64]) -> SparseVoxelGrid {
        let c = coords.iter().map(|&(i, j, k)| VoxelCoord::new(i, j, k)).collect();
        SparseVoxelGrid::new(c, feats.to_vec(), 1, None, 1, 0.1).unwrap()
    }

    #[test]
    fn pools_by_max() {
        let (g, m) = downsample(&grid(&[(0, 0, 0), (1, 0, 0)], &[1.0, 5.0]), 2).unwrap();
        assert_eq!(g.coords(), &[VoxelCoord::new(0, 0, 0)]);
        assert_eq!(g.features(), &[5.0]);
        assert_eq!(g.stride(), 2);
        assert_eq!(m.parents(), &[0, 0]);
    }

    #[test]
    fn single_voxel_is_unchanged() {
        let (g, _) = downsample(&grid(&[(0, 0, 0)], &[3.0]), 2).unwrap();
        assert_eq!(g.features(), &[3.0]);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn rejects_other_factors() {
        assert!(downsample(&grid(&[(0, 0, 0)], &[3.0]), 3).is_err());
    }

    #[test]
    fn one_parent_three_children() {
        let fine = grid(&[(0, 0, 0), (1, 0, 0), (1, 1, 1)], &[1.0, 2.0, 3.0]);
        let (coarse, m) = downsample(&fine, 2).unwrap();
        let up = upsample(&coarse, &m).unwrap();
        assert_eq!(up, vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn constant_round_trip() {
        let fine = grid(&[(0, 0, 0), (3, 1, 0), (-1, -1, 4), (7, 7, 7)], &[2.5; 4]);
        let (coarse, m) = downsample(&fine, 2).unwrap();
        assert!(upsample(&coarse, &m).unwrap().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn mismatched_mapping_is_structural() {
        let fine = grid(&[(0, 0, 0), (5, 5, 5)], &[1.0, 2.0]);
        let (_, m) = downsample(&fine, 2).unwrap();
        let other = grid(&[(0, 0, 0)], &[1.0]);
        assert!(matches!(upsample(&other, &m), Err(Error::Structural(_))));
    }

    proptest! {
        #[test]
        fn count_matches_dedup_oracle_and_replay(raw in prop::collection::vec((-9i32..9, -9i32..9, -9i32..9), 1..100)) {
            let set: BTreeSet<_> = raw.iter().copied().collect();
            let coords: Vec<_> = set.into_iter().collect();
            let feats: Vec<f64> = (0..coords.len()).map(|v| v as f64 * 0.5 - 3.0).collect();
            let fine = grid(&coords, &feats);
            let (coarse, m) = downsample(&fine, 2).unwrap();
            let oracle: BTreeSet<_> = coords.iter().map(|&(i, j, k)| (i.div_euclid(2), j.div_euclid(2), k.div_euclid(2))).collect();
            prop_assert_eq!(coarse.len(), oracle.len());
            let up = upsample(&coarse, &m).unwrap();
            for (r, c) in fine.coords().iter().enumerate() {
                let p = coarse.row_of(c.halved()).unwrap();
                prop_assert_eq!(up[r], coarse.features()[p]);
            }
            // Two halvings equal one floor division by four.
            let (coarser, _) = downsample(&coarse, 2).unwrap();
            let by4: BTreeSet<_> = coords.iter().map(|&(i, j, k)| VoxelCoord::new(i.div_euclid(4), j.div_euclid(4), k.div_euclid(4))).collect();
            prop_assert_eq!(coarser.coords().to_vec(), by4.into_iter().collect::<Vec<_>>());
        }
    }
}
