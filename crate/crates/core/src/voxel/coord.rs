use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

/// Integer lattice coordinate at some stride level.
///
/// Ordering is lexicographic on `(i, j, k)`, which is the canonical voxel order
/// used everywhere in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VoxelCoord {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl VoxelCoord {
    pub const fn new(i: i32, j: i32, k: i32) -> Self {
        Self { i, j, k }
    }

    /// `None` if the result leaves the 32-bit domain.
    pub fn checked_offset(self, di: i32, dj: i32, dk: i32) -> Option<Self> {
        Some(Self {
            i: self.i.checked_add(di)?,
            j: self.j.checked_add(dj)?,
            k: self.k.checked_add(dk)?,
        })
    }

    /// Parent coordinate one stride level up (floor division by two).
    pub fn halved(self) -> Self {
        Self {
            i: self.i.div_euclid(2),
            j: self.j.div_euclid(2),
            k: self.k.div_euclid(2),
        }
    }

    /// Packs the three 32-bit components into 96 bits, folded into a `u64` key
    /// and finalised with the splitmix64 mixer. The fold is not injective on
    /// its own; equality on the full coordinate resolves collisions.
    pub fn mix64(self) -> u64 {
        let a = self.i as u32 as u64;
        let b = self.j as u32 as u64;
        let c = self.k as u32 as u64;
        let mut z = (a << 32 | b) ^ c.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// Hasher for [`VoxelCoord`] keys. Only `write_u64` from [`VoxelCoord::mix64`]
/// is expected; other writes fall back to an FNV-style fold.
#[derive(Default, Clone, Copy)]
pub struct CoordHasher(u64);

impl Hasher for CoordHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 ^= v;
    }
}

/// Coordinate to row lookup.
#[derive(Debug, Clone, Default)]
pub struct CoordMap {
    inner: HashMap<CoordKey, u32, BuildHasherDefault<CoordHasher>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct CoordKey(VoxelCoord);

impl std::hash::Hash for CoordKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.mix64());
    }
}

impl CoordMap {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            inner: HashMap::with_capacity_and_hasher(n, Default::default()),
        }
    }

    pub fn insert(&mut self, c: VoxelCoord, row: u32) -> Option<u32> {
        self.inner.insert(CoordKey(c), row)
    }

    #[inline]
    pub fn get(&self, c: VoxelCoord) -> Option<u32> {
        self.inner.get(&CoordKey(c)).copied()
    }

    pub fn len(&self) -> usize {
        self.inner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }
}
