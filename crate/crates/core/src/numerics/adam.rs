use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p -= lr * wd * p`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One Adam update of every non-frozen slice.
pub fn adam_step(store: &mut ParamStore, grads: &[f64], state: &mut OptimizerState) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::structural(format!(
            "optimizer sized for {} parameters, store has {}, gradient has {}",
            state.m.len(),
            store.len(),
            grads.len()
        )));
    }
    for s in store.slices() {
        if !s.frozen && s.slot().of(grads).iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { slice: s.name.clone() });
        }
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    let slots: Vec<_> = store
        .slices()
        .iter()
        .filter(|s| !s.frozen)
        .map(|s| s.slot())
        .collect();
    let values = store.values_mut();
    for slot in slots {
        for i in slot.range() {
            let g = grads[i];
            state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
            state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
            let mhat = state.m[i] / bc1;
            let vhat = state.v[i] / bc2;
            values[i] -= lr * (mhat / (vhat.sqrt() + eps) + weight_decay * values[i]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Init, ParamStoreBuilder};

    fn scalar(x: f64) -> ParamStore {
        let mut b = ParamStoreBuilder::new(0);
        b.add("x", &[1], Init::Constant(x));
        b.build()
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut s = scalar(2.0);
        let mut st = OptimizerState::new(AdamConfig { weight_decay: 0.0, ..Default::default() }, 1);
        adam_step(&mut s, &[0.0], &mut st).unwrap();
        assert_eq!(s.values(), &[2.0]);
        let mut st = OptimizerState::new(AdamConfig { lr: 0.1, weight_decay: 0.5, ..Default::default() }, 1);
        adam_step(&mut s, &[0.0], &mut st).unwrap();
        assert!((s.values()[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn unit_gradient_strictly_decreases() {
        let mut s = scalar(0.0);
        let mut st = OptimizerState::new(AdamConfig::default(), 1);
        let mut last = 0.0;
        for _ in 0..50 {
            adam_step(&mut s, &[1.0], &mut st).unwrap();
            assert!(s.values()[0] < last);
            last = s.values()[0];
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut s = scalar(1.0);
        let mut st = OptimizerState::new(AdamConfig { lr: 0.1, ..Default::default() }, 1);
        for _ in 0..200 {
            let g = 2.0 * s.values()[0];
            adam_step(&mut s, &[g], &mut st).unwrap();
        }
        assert!(s.values()[0].abs() < 1e-2, "x = {}", s.values()[0]);
    }

    #[test]
    fn nan_gradient_names_slice_and_frozen_is_skipped() {
        let mut b = ParamStoreBuilder::new(0);
        b.add("a", &[1], Init::Constant(1.0));
        b.add("bias", &[1], Init::Constant(1.0));
        let mut s = b.build();
        let mut st = OptimizerState::new(AdamConfig::default(), 2);
        match adam_step(&mut s, &[0.0, f64::NAN], &mut st) {
            Err(Error::NonFiniteGradient { slice }) => assert_eq!(slice, "bias"),
            other => panic!("unexpected {other:?}"),
        }
        s.set_frozen("bias", true).unwrap();
        adam_step(&mut s, &[1.0, f64::NAN], &mut st).unwrap();
        assert_eq!(s.values()[1], 1.0);
        assert!(s.values()[0] < 1.0);
    }
}
