use serde::{Deserialize, Serialize};

use super::coord::VoxelCoord;
use super::grid::SparseVoxelGrid;
use crate::{Error, Result};

pub const NUM_SLOTS: usize = 27;
pub const CENTER_SLOT: usize = 13;
/// Marker for a neighbor slot with no voxel.
pub const ABSENT: u32 = u32::MAX;

/// The 27 offsets `{-d, 0, d}^3`, lexicographic with the third axis fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborOffsets {
    dilation: u32,
}

impl NeighborOffsets {
    pub fn new(dilation: u32) -> Result<Self> {
        if dilation == 0 {
            return Err(Error::invalid("dilation must be at least 1"));
        }
        Ok(Self { dilation })
    }

    pub fn dilation(&self) -> u32 {
        self.dilation
    }

    /// Unit offset of a slot, components in `{-1, 0, 1}`.
    pub const fn unit(slot: usize) -> [i32; 3] {
        [
            (slot / 9) as i32 - 1,
            ((slot / 3) % 3) as i32 - 1,
            (slot % 3) as i32 - 1,
        ]
    }

    /// Slot holding the negated offset.
    pub const fn opposite(slot: usize) -> usize {
        NUM_SLOTS - 1 - slot
    }

    pub fn offset(&self, slot: usize) -> [i32; 3] {
        let d = self.dilation as i32;
        let [a, b, c] = Self::unit(slot);
        [a * d, b * d, c * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = [i32; 3]> + '_ {
        (0..NUM_SLOTS).map(|s| self.offset(s))
    }
}

/// Per-voxel table of the 27 neighbor rows at one dilation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborIndex {
    dilation: u32,
    entries: Vec<[u32; NUM_SLOTS]>,
}

impl NeighborIndex {
    /// Builds a table from raw rows; entry 13 must be the voxel itself.
    pub fn from_rows(dilation: u32, entries: Vec<[u32; NUM_SLOTS]>) -> Result<Self> {
        for (v, row) in entries.iter().enumerate() {
            if row[CENTER_SLOT] as usize != v {
                return Err(Error::structural(format!("voxel {v} does not point to itself at slot 13")));
            }
            if let Some(&bad) = row.iter().find(|&&e| e != ABSENT && e as usize >= entries.len()) {
                return Err(Error::structural(format!("voxel {v} references row {bad} out of range")));
            }
        }
        Ok(Self { dilation, entries })
    }

    pub fn dilation(&self) -> u32 {
        self.dilation
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn row(&self, voxel: usize) -> &[u32; NUM_SLOTS] {
        &self.entries[voxel]
    }

    #[inline]
    pub fn get(&self, voxel: usize, slot: usize) -> Option<usize> {
        match self.entries[voxel][slot] {
            ABSENT => None,
            r => Some(r as usize),
        }
    }

    pub fn rows(&self) -> &[[u32; NUM_SLOTS]] {
        &self.entries
    }
}

/// Resolves every voxel's 27 neighbors at `dilation`. Missing neighbors and
/// offsets that leave the 32-bit domain are [`ABSENT`].
pub fn build_neighbor_index(grid: &SparseVoxelGrid, dilation: u32) -> Result<NeighborIndex> {
    let offsets = NeighborOffsets::new(dilation)?;
    let lookup = grid.lookup();
    let entries = grid
        .coords()
        .iter()
        .enumerate()
        .map(|(row, &c)| {
            let mut e = [ABSENT; NUM_SLOTS];
            for (slot, [di, dj, dk]) in offsets.iter().enumerate() {
                e[slot] = if slot == CENTER_SLOT {
                    row as u32
                } else {
                    c.checked_offset(di, dj, dk)
                        .and_then(|n| lookup.get(n))
                        .unwrap_or(ABSENT)
                };
            }
            e
        })
        .collect();
    Ok(NeighborIndex { dilation, entries })
}

/// 27-bit occupancy pattern of a neighborhood; bit `o` is slot `o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupancyMask(pub u32);

impl OccupancyMask {
    pub const FULL: OccupancyMask = OccupancyMask((1 << NUM_SLOTS) - 1);
    pub const CENTER: OccupancyMask = OccupancyMask(1 << CENTER_SLOT);

    #[inline]
    pub fn bits(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn contains(self, slot: usize) -> bool {
        self.0 >> slot & 1 == 1
    }

    #[inline]
    pub fn popcount(self) -> u32 {
        self.0.count_ones()
    }

    #[inline]
    pub fn intersection_count(self, other: OccupancyMask) -> u32 {
        (self.0 & other.0).count_ones()
    }

    #[inline]
    pub fn hamming(self, other: OccupancyMask) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    /// 27 characters, character `o` is slot `o`.
    pub fn to_bitstring(self) -> String {
        (0..NUM_SLOTS)
            .map(|o| if self.contains(o) { '1' } else { '0' })
            .collect()
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        if s.len() != NUM_SLOTS {
            return Err(Error::invalid(format!(
                "mask bitstring must have {NUM_SLOTS} characters, got {}",
                s.len()
            )));
        }
        let mut bits = 0u32;
        for (o, ch) in s.chars().enumerate() {
            match ch {
                '1' => bits |= 1 << o,
                '0' => {}
                other => return Err(Error::invalid(format!("bad mask character {other:?}"))),
            }
        }
        Ok(Self(bits))
    }

    /// The nine slots whose third offset component is zero: a horizontal plane
    /// when the third axis points up.
    pub fn horizontal_plane() -> Self {
        Self::from_slots((0..NUM_SLOTS).filter(|&s| NeighborOffsets::unit(s)[2] == 0))
    }

    pub fn from_slots(slots: impl IntoIterator<Item = usize>) -> Self {
        Self(slots.into_iter().fold(0, |m, s| m | 1 << s))
    }
}

pub fn occupancy_masks(index: &NeighborIndex) -> Vec<OccupancyMask> {
    index
        .rows()
        .iter()
        .map(|row| {
            let mut bits = 1 << CENTER_SLOT;
            for (o, &e) in row.iter().enumerate() {
                if e != ABSENT {
                    bits |= 1 << o;
                }
            }
            OccupancyMask(bits)
        })
        .collect()
}

/// Occupancy masks straight from coordinates, without keeping the index.
pub fn occupancy_of(grid: &SparseVoxelGrid, c: VoxelCoord, dilation: u32) -> OccupancyMask {
    let d = dilation as i32;
    let mut bits = 1 << CENTER_SLOT;
    for s in 0..NUM_SLOTS {
        let [a, b, k] = NeighborOffsets::unit(s);
        if s != CENTER_SLOT
            && c.checked_offset(a * d, b * d, k * d)
                .and_then(|n| grid.row_of(n))
                .is_some()
        {
            bits |= 1 << s;
        }
    }
    OccupancyMask(bits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::BTreeSet;

    fn grid_of(coords: &[VoxelCoord]) -> SparseVoxelGrid {
        let set: BTreeSet<_> = coords.iter().copied().collect();
        let coords: Vec<_> = set.into_iter().collect();
        let n = coords.len();
        SparseVoxelGrid::new(coords, vec![0.0; n], 1, None, 1, 1.0).unwrap()
    }

    fn dense_block() -> SparseVoxelGrid {
        let mut c = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                for k in -1..=1 {
                    c.push(VoxelCoord::new(i, j, k));
                }
            }
        }
        grid_of(&c)
    }

    #[test]
    fn offsets_are_canonical() {
        let o = NeighborOffsets::new(2).unwrap();
        let all: Vec<_> = o.iter().collect();
        assert_eq!(all.len(), 27);
        assert_eq!(all[0], [-2, -2, -2]);
        assert_eq!(all[1], [-2, -2, 0]);
        assert_eq!(all[CENTER_SLOT], [0, 0, 0]);
        assert_eq!(all[26], [2, 2, 2]);
        for s in 0..27 {
            let [a, b, c] = o.offset(s);
            assert_eq!(o.offset(NeighborOffsets::opposite(s)), [-a, -b, -c]);
        }
        assert!(NeighborOffsets::new(0).is_err());
    }

    #[test]
    fn isolated_voxel_sees_only_itself() {
        let g = grid_of(&[VoxelCoord::new(5, 5, 5)]);
        let idx = build_neighbor_index(&g, 1).unwrap();
        let row = idx.row(0);
        assert_eq!(row.iter().filter(|&&e| e == ABSENT).count(), 26);
        assert_eq!(row[CENTER_SLOT], 0);
        assert_eq!(occupancy_masks(&idx)[0].popcount(), 1);
    }

    #[test]
    fn dense_block_center_sees_everything() {
        let g = dense_block();
        let idx = build_neighbor_index(&g, 1).unwrap();
        let center = g.row_of(VoxelCoord::new(0, 0, 0)).unwrap();
        assert!(idx.row(center).iter().all(|&e| e != ABSENT));
        assert_eq!(occupancy_masks(&idx)[center], OccupancyMask::FULL);
    }

    #[test]
    fn plane_interior_mask_is_horizontal_plane() {
        let mut c = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                c.push(VoxelCoord::new(i, j, 0));
            }
        }
        let g = grid_of(&c);
        let idx = build_neighbor_index(&g, 1).unwrap();
        let m = occupancy_masks(&idx)[g.row_of(VoxelCoord::new(2, 2, 0)).unwrap()];
        assert_eq!(m, OccupancyMask::horizontal_plane());
        assert_eq!(m.popcount(), 9);
    }

    #[test]
    fn bitstring_round_trip_and_errors() {
        let m = OccupancyMask::horizontal_plane();
        assert_eq!(OccupancyMask::from_bitstring(&m.to_bitstring()).unwrap(), m);
        assert!(OccupancyMask::from_bitstring("0101").is_err());
        assert!(OccupancyMask::from_bitstring(&"2".repeat(27)).is_err());
        assert_eq!(&OccupancyMask::CENTER.to_bitstring()[12..15], "010");
    }

    #[test]
    fn matches_quadratic_scan_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut set = BTreeSet::new();
        while set.len() < 200 {
            set.insert(VoxelCoord::new(rng.gen_range(0..12), rng.gen_range(0..12), rng.gen_range(0..6)));
        }
        let g = grid_of(&set.into_iter().collect::<Vec<_>>());
        let idx = build_neighbor_index(&g, 2).unwrap();
        let coords = g.coords();
        for (a, ca) in coords.iter().enumerate() {
            let mut expect = [ABSENT; NUM_SLOTS];
            for (b, cb) in coords.iter().enumerate() {
                let d = [cb.i - ca.i, cb.j - ca.j, cb.k - ca.k];
                if d.iter().all(|v| matches!(v, -2 | 0 | 2)) {
                    let s = ((d[0] / 2 + 1) * 9 + (d[1] / 2 + 1) * 3 + (d[2] / 2 + 1)) as usize;
                    expect[s] = b as u32;
                }
            }
            assert_eq!(idx.row(a), &expect, "voxel {a}");
        }
    }

    #[test]
    fn occupancy_of_agrees_with_index() {
        let g = dense_block();
        let idx = build_neighbor_index(&g, 1).unwrap();
        let masks = occupancy_masks(&idx);
        for (r, c) in g.coords().iter().enumerate() {
            assert_eq!(occupancy_of(&g, *c, 1), masks[r]);
        }
    }

    proptest! {
        #[test]
        fn neighbor_relation_is_symmetric(
            raw in prop::collection::vec((-4i32..4, -4i32..4, -4i32..4), 1..60),
            dilation in 1u32..3,
        ) {
            let g = grid_of(&raw.iter().map(|&(i, j, k)| VoxelCoord::new(i, j, k)).collect::<Vec<_>>());
            let idx = build_neighbor_index(&g, dilation).unwrap();
            for a in 0..g.len() {
                for s in 0..NUM_SLOTS {
                    if let Some(b) = idx.get(a, s) {
                        prop_assert_eq!(idx.get(b, NeighborOffsets::opposite(s)), Some(a));
                    }
                }
            }
        }

        #[test]
        fn masks_are_translation_invariant(
            raw in prop::collection::vec((-4i32..4, -4i32..4, -4i32..4), 1..60),
            shift in (-100i32..100, -100i32..100, -100i32..100),
        ) {
            let a: Vec<_> = raw.iter().map(|&(i, j, k)| VoxelCoord::new(i, j, k)).collect();
            let b: Vec<_> = a.iter().map(|c| VoxelCoord::new(c.i + shift.0, c.j + shift.1, c.k + shift.2)).collect();
            let ma = occupancy_masks(&build_neighbor_index(&grid_of(&a), 1).unwrap());
            let mb = occupancy_masks(&build_neighbor_index(&grid_of(&b), 1).unwrap());
            prop_assert_eq!(ma, mb);
        }
    }
}
