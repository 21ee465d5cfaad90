use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::kmodes::{kmodes, KModesConfig};
use crate::voxel::OccupancyMask;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowReport {
    pub m_star: usize,
    /// False when no saturation point was found and `m_star` is the range maximum.
    pub saturated: bool,
    pub cost_curve: Vec<(usize, f64)>,
}

/// Smallest `M` whose next step improves the cost by less than
/// `threshold * cost(M)`. A zero cost counts as saturated.
pub fn elbow_from_curve(curve: &[(usize, f64)], threshold: f64) -> Result<(usize, bool)> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("elbow threshold {threshold} must lie in (0, 1)")));
    }
    if curve.is_empty() {
        return Err(Error::invalid("empty cost curve"));
    }
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::invalid("cost curve must be ascending in M"));
    }
    for w in curve.windows(2) {
        let (m, c) = w[0];
        let drop = c - w[1].1;
        if c <= 0.0 || drop < threshold * c {
            return Ok((m, true));
        }
    }
    let (m, c) = *curve.last().expect("non-empty");
    Ok((m, c <= 0.0))
}

/// Runs K-modes for every `M` in `range` (capped at the number of distinct
/// masks) and applies [`elbow_from_curve`].
pub fn elbow_select(
    masks: &[OccupancyMask],
    range: std::ops::RangeInclusive<usize>,
    threshold: f64,
    base: &KModesConfig,
) -> Result<ElbowReport> {
    let distinct = masks.iter().collect::<BTreeSet<_>>().len();
    let lo = (*range.start()).max(1);
    let hi = (*range.end()).min(distinct);
    if lo > hi {
        return Err(Error::TooFewDistinctMasks {
            requested: lo,
            distinct,
        });
    }
    let mut cost_curve = Vec::with_capacity(hi - lo + 1);
    for m in lo..=hi {
        let r = kmodes(masks, &KModesConfig { clusters: m, ..*base })?;
        cost_curve.push((m, r.cost));
    }
    let (m_star, saturated) = elbow_from_curve(&cost_curve, threshold)?;
    Ok(ElbowReport {
        m_star,
        saturated,
        cost_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curve(c: &[f64]) -> Vec<(usize, f64)> {
        c.iter().enumerate().map(|(i, &v)| (i + 1, v)).collect()
    }

    #[test]
    fn knee_of_worked_curve() {
        assert_eq!(elbow_from_curve(&curve(&[100.0, 50.0, 48.0, 47.0]), 0.05).unwrap(), (2, true));
    }

    #[test]
    fn geometric_decay_never_saturates() {
        let c: Vec<f64> = (0..8).map(|i| 1000.0 * 0.5f64.powi(i)).collect();
        assert_eq!(elbow_from_curve(&curve(&c), 0.05).unwrap(), (8, false));
    }

    #[test]
    fn zero_cost_saturates_and_bad_threshold_rejected() {
        assert_eq!(elbow_from_curve(&curve(&[10.0, 0.0, 0.0]), 0.05).unwrap(), (2, true));
        assert!(elbow_from_curve(&curve(&[1.0]), 1.5).is_err());
        assert!(elbow_from_curve(&curve(&[1.0]), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn scale_invariant(c in prop::collection::vec(0.1f64..1000.0, 2..12), scale in 0.001f64..1000.0) {
            let mut sorted = c.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            let a = elbow_from_curve(&curve(&sorted), 0.05).unwrap();
            let scaled: Vec<f64> = sorted.iter().map(|v| v * scale).collect();
            let b = elbow_from_curve(&curve(&scaled), 0.05).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
