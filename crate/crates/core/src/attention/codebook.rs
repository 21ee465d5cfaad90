use crate::patterns::RegionSet;
use crate::voxel::OccupancyMask;
use crate::{Error, Result};

/// Spatial supports of the `K = M * D` codebook elements of one block.
///
/// Element `k` has shape `k / D` and dilation index `k % D`; its support is
/// `masks[k]` evaluated on the neighbor table at `dilations[k % D]`.
/// The prototype values themselves live in the parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCodebook {
    m: usize,
    d: usize,
    dilations: Vec<u32>,
    masks: Vec<OccupancyMask>,
    sizes: Vec<f64>,
}

impl RegionCodebook {
    pub fn new(m: usize, d: usize, dilations: Vec<u32>, masks: Vec<OccupancyMask>) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid("codebook needs M >= 1 and D >= 1"));
        }
        if dilations.len() != d || dilations.contains(&0) {
            return Err(Error::structural(format!("{} dilations for D = {d}", dilations.len())));
        }
        if masks.len() != m * d {
            return Err(Error::structural(format!("{} region masks for M x D = {}", masks.len(), m * d)));
        }
        if let Some(k) = masks.iter().position(|r| r.popcount() == 0) {
            return Err(Error::structural(format!("codebook region {k} is empty")));
        }
        let sizes = masks.iter().map(|r| r.popcount() as f64).collect();
        Ok(Self { m, d, dilations, masks, sizes })
    }

    /// Mined regions of one stride with dilations `1..=D`.
    pub fn from_regions(set: &RegionSet, stride: u32) -> Result<Self> {
        Self::new(set.m, set.d, (1..=set.d as u32).collect(), set.flat_masks(stride)?)
    }

    /// `K = M * D` full-cube supports, all at dilation 1.
    pub fn codebook_only(m: usize, d: usize) -> Result<Self> {
        Self::new(m, d, vec![1; d], vec![OccupancyMask::FULL; m * d])
    }

    /// A single full-cube element at dilation 1.
    pub fn single_full() -> Self {
        Self::new(1, 1, vec![1], vec![OccupancyMask::FULL]).expect("valid")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.m * self.d
    }

    pub fn dilations(&self) -> &[u32] {
        &self.dilations
    }

    pub fn masks(&self) -> &[OccupancyMask] {
        &self.masks
    }

    #[inline]
    pub fn mask(&self, k: usize) -> OccupancyMask {
        self.masks[k]
    }

    /// Number of slots in the support of element `k`.
    #[inline]
    pub fn region_size(&self, k: usize) -> f64 {
        self.sizes[k]
    }

    #[inline]
    pub fn dilation_index(&self, k: usize) -> usize {
        k % self.d
    }

    #[inline]
    pub fn shape_index(&self, k: usize) -> usize {
        k / self.d
    }
}
