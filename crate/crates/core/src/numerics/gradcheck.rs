use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::rng::rng_for;
use crate::{Error, Result};

/// `|a - b| / max(|a|, |b|, 1e-12)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceError {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Flat index, analytic value and central difference at the worst coordinate.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub checked: usize,
    pub max_rel_error: f64,
    pub slices: Vec<SliceError>,
}

/// Compares `analytic` against central differences of `loss` at `store`.
///
/// With `samples = None` every coordinate is checked; otherwise a seeded
/// uniform subset of that size.
pub fn finite_diff_check<F>(
    mut loss: F,
    store: &ParamStore,
    analytic: &[f64],
    h: f64,
    samples: Option<usize>,
    seed: u64,
) -> Result<GradcheckReport>
where
    F: FnMut(&ParamStore) -> f64,
{
    if analytic.len() != store.len() {
        return Err(Error::structural(format!(
            "{} analytic gradients for {} parameters",
            analytic.len(),
            store.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let first = loss(store);
    let second = loss(store);
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministicLoss { first, second });
    }

    let n = store.len();
    let mut coords: Vec<usize> = match samples {
        Some(k) if k < n => sample(&mut rng_for(seed, "gradcheck"), n, k).into_vec(),
        _ => (0..n).collect(),
    };
    coords.sort_unstable();

    let mut slices: Vec<SliceError> = store
        .slices()
        .iter()
        .map(|s| SliceError {
            name: s.name.clone(),
            checked: 0,
            max_rel_error: 0.0,
            worst: None,
        })
        .collect();
    let mut probe = store.clone();
    for &i in &coords {
        let base = store.values()[i];
        probe.values_mut()[i] = base + h;
        let up = loss(&probe);
        probe.values_mut()[i] = base - h;
        let down = loss(&probe);
        probe.values_mut()[i] = base;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        let s = store
            .slices()
            .iter()
            .position(|s| s.slot().range().contains(&i))
            .expect("coordinate inside a slice");
        let entry = &mut slices[s];
        entry.checked += 1;
        if err > entry.max_rel_error || entry.worst.is_none() || err.is_nan() {
            entry.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            entry.worst = Some((i, analytic[i], numeric));
        }
    }
    let max_rel_error = slices.iter().map(|s| s.max_rel_error).fold(0.0, f64::max);
    Ok(GradcheckReport {
        step: h,
        checked: coords.len(),
        max_rel_error,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Init, ParamStoreBuilder};
    use std::cell::Cell;

    #[test]
    fn sum_of_squares() {
        let mut b = ParamStoreBuilder::new(0);
        let x = b.add("x", &[2], Init::Zeros);
        b.add("unused", &[3], Init::Constant(4.0));
        let mut s = b.build();
        s.get_mut(x).copy_from_slice(&[1.0, 2.0]);
        let loss = |p: &ParamStore| p.get(x).iter().map(|v| v * v).sum::<f64>();
        let mut g = s.zeros_like();
        g[0] = 2.0;
        g[1] = 4.0;
        let r = finite_diff_check(loss, &s, &g, 1e-5, None, 0).unwrap();
        assert!(r.slices[0].max_rel_error < 1e-9);
        assert_eq!(r.slices[1].max_rel_error, 0.0);
        assert_eq!(r.checked, 5);
    }

    #[test]
    fn detects_nondeterminism() {
        let mut b = ParamStoreBuilder::new(0);
        b.add("x", &[1], Init::Zeros);
        let s = b.build();
        let calls = Cell::new(0.0);
        let loss = |_: &ParamStore| {
            calls.set(calls.get() + 1.0);
            calls.get()
        };
        assert!(matches!(
            finite_diff_check(loss, &s, &[0.0], 1e-5, None, 0),
            Err(Error::NonDeterministicLoss { .. })
        ));
    }

    #[test]
    fn subsamples_coordinates() {
        let mut b = ParamStoreBuilder::new(0);
        b.add("x", &[100], Init::Normal { std: 1.0 });
        let s = b.build();
        let g: Vec<f64> = s.values().iter().map(|v| 3.0 * v * v).collect();
        let r = finite_diff_check(|p| p.values().iter().map(|v| v * v * v).sum(), &s, &g, 1e-5, Some(10), 1).unwrap();
        assert_eq!(r.checked, 10);
        assert!(r.max_rel_error < 1e-6);
    }
}
