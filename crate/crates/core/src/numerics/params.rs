use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rng::rng_for;
use crate::{Error, Result};

/// Offset and length of one named tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn range(self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }

    #[inline]
    pub fn of(self, flat: &[f64]) -> &[f64] {
        &flat[self.range()]
    }

    #[inline]
    pub fn of_mut(self, flat: &mut [f64]) -> &mut [f64] {
        &mut flat[self.range()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Frozen slices are skipped by the optimizer.
    #[serde(default)]
    pub frozen: bool,
}

impl ParamSlice {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slot(&self) -> Slot {
        Slot {
            offset: self.offset,
            len: self.len(),
        }
    }
}

/// Initialisation rule for a slice. Each slice draws from its own stream
/// derived from `(seed, name)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)`.
    KaimingUniform { fan_in: usize },
    Normal { std: f64 },
}

#[derive(Debug)]
pub struct ParamStoreBuilder {
    seed: u64,
    slices: Vec<ParamSlice>,
    values: Vec<f64>,
}

impl ParamStoreBuilder {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            slices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Slot {
        let name = name.into();
        debug_assert!(self.slices.iter().all(|s| s.name != name), "duplicate slice {name}");
        let len: usize = shape.iter().product();
        let offset = self.values.len();
        let mut rng = rng_for(self.seed, &name);
        match init {
            Init::Zeros => self.values.extend(std::iter::repeat(0.0).take(len)),
            Init::Constant(c) => self.values.extend(std::iter::repeat(c).take(len)),
            Init::KaimingUniform { fan_in } => {
                let b = (6.0 / fan_in.max(1) as f64).sqrt();
                self.values.extend((0..len).map(|_| rng.gen_range(-b..b)));
            }
            Init::Normal { std } => {
                let d = Normal::new(0.0, std).expect("finite std");
                self.values.extend((0..len).map(|_| d.sample(&mut rng)));
            }
        }
        self.slices.push(ParamSlice {
            name,
            shape: shape.to_vec(),
            offset,
            frozen: false,
        });
        Slot { offset, len }
    }

    pub fn build(self) -> ParamStore {
        ParamStore {
            values: self.values,
            slices: self.slices,
        }
    }
}

/// Named, non-overlapping slices over one flat `f64` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    values: Vec<f64>,
    slices: Vec<ParamSlice>,
}

impl ParamStore {
    pub fn from_parts(slices: Vec<ParamSlice>, values: Vec<f64>) -> Result<Self> {
        let mut expect = 0;
        for s in &slices {
            if s.offset != expect {
                return Err(Error::structural(format!(
                    "slice `{}` starts at {} but previous slices end at {expect}",
                    s.name, s.offset
                )));
            }
            expect += s.len();
        }
        if expect != values.len() {
            return Err(Error::structural(format!(
                "slices cover {expect} values, payload has {}",
                values.len()
            )));
        }
        Ok(Self { values, slices })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, slot: Slot) -> &[f64] {
        slot.of(&self.values)
    }

    #[inline]
    pub fn get_mut(&mut self, slot: Slot) -> &mut [f64] {
        slot.of_mut(&mut self.values)
    }

    pub fn slices(&self) -> &[ParamSlice] {
        &self.slices
    }

    pub fn slice(&self, name: &str) -> Option<&ParamSlice> {
        self.slices.iter().find(|s| s.name == name)
    }

    pub fn set_frozen(&mut self, name: &str, frozen: bool) -> Result<()> {
        let s = self
            .slices
            .iter_mut()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::invalid(format!("no parameter slice `{name}`")))?;
        s.frozen = frozen;
        Ok(())
    }

    /// Freezes every slice whose name ends with `suffix`.
    pub fn freeze_matching(&mut self, suffix: &str) {
        for s in &mut self.slices {
            if s.name.ends_with(suffix) {
                s.frozen = true;
            }
        }
    }

    /// A zeroed gradient buffer of matching length.
    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }

    /// Name of the slice containing flat index `i`.
    pub fn slice_of(&self, i: usize) -> Option<&ParamSlice> {
        self.slices.iter().find(|s| (s.offset..s.offset + s.len()).contains(&i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_are_contiguous_and_seeded_by_name() {
        let mut a = ParamStoreBuilder::new(3);
        let w = a.add("w", &[4, 2], Init::KaimingUniform { fan_in: 4 });
        let b = a.add("b", &[2], Init::Zeros);
        let a = a.build();
        assert_eq!(w, Slot { offset: 0, len: 8 });
        assert_eq!(b, Slot { offset: 8, len: 2 });
        assert!(a.get(w).iter().all(|v| v.abs() <= (6.0f64 / 4.0).sqrt()));

        let mut c = ParamStoreBuilder::new(3);
        c.add("other", &[5], Init::Normal { std: 1.0 });
        let w2 = c.add("w", &[4, 2], Init::KaimingUniform { fan_in: 4 });
        let c = c.build();
        assert_eq!(a.get(w), c.get(w2));
    }

    #[test]
    fn from_parts_validates_coverage() {
        let s = vec![ParamSlice { name: "a".into(), shape: vec![2], offset: 0, frozen: false }];
        assert!(ParamStore::from_parts(s.clone(), vec![0.0; 2]).is_ok());
        assert!(ParamStore::from_parts(s, vec![0.0; 3]).is_err());
    }
}
