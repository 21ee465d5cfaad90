use crate::numerics::linalg::{matmul, matmul_a_bt_acc, matmul_at_b_acc, silu, silu_grad};
use crate::numerics::{Init, ParamStoreBuilder, Slot};
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Pre-norm, value projection, SiLU, output projection and residual shared by
/// every block kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Plumbing {
    pub channels: usize,
    pub heads: usize,
    pub norm_scale: Slot,
    pub norm_shift: Slot,
    pub value: Slot,
    pub out: Slot,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct PreCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
    pub u: Vec<f64>,
    pub g: Vec<f64>,
}

impl Plumbing {
    pub fn register(b: &mut ParamStoreBuilder, prefix: &str, channels: usize, heads: usize) -> Result<Self> {
        if heads == 0 || channels == 0 || channels % heads != 0 {
            return Err(Error::invalid(format!("channels {channels} must be a positive multiple of heads {heads}")));
        }
        let c = channels;
        Ok(Self {
            channels,
            heads,
            norm_scale: b.add(format!("{prefix}.norm.scale"), &[c], Init::Constant(1.0)),
            norm_shift: b.add(format!("{prefix}.norm.shift"), &[c], Init::Zeros),
            value: b.add(format!("{prefix}.value"), &[c, c], Init::KaimingUniform { fan_in: c }),
            out: b.add(format!("{prefix}.out"), &[c, c], Init::KaimingUniform { fan_in: c }),
        })
    }

    pub fn param_count(channels: usize) -> usize {
        2 * channels + 2 * channels * channels
    }

    pub(crate) fn voxels(&self, x: &[f64]) -> Result<usize> {
        if x.len() % self.channels != 0 {
            return Err(Error::structural(format!(
                "{} feature values are not a multiple of C = {}",
                x.len(),
                self.channels
            )));
        }
        Ok(x.len() / self.channels)
    }

    /// LayerNorm then value projection.
    pub(crate) fn pre(&self, params: &[f64], x: &[f64]) -> Result<PreCache> {
        let c = self.channels;
        let n = self.voxels(x)?;
        let gamma = self.norm_scale.of(params);
        let beta = self.norm_shift.of(params);
        let mut xhat = vec![0.0; n * c];
        let mut u = vec![0.0; n * c];
        let mut rstd = vec![0.0; n];
        for i in 0..n {
            let row = &x[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let r = 1.0 / (var + LN_EPS).sqrt();
            rstd[i] = r;
            for ch in 0..c {
                let xh = (row[ch] - mean) * r;
                xhat[i * c + ch] = xh;
                u[i * c + ch] = gamma[ch] * xh + beta[ch];
            }
        }
        let g = matmul(&u, self.value.of(params), n, c, c);
        Ok(PreCache { xhat, rstd, u, g })
    }

    /// `x + SiLU(y) W_out`; also returns `SiLU(y)`.
    pub(crate) fn post(&self, params: &[f64], x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.channels;
        let n = x.len() / c;
        let z: Vec<f64> = y.iter().map(|&v| silu(v)).collect();
        let mut out = matmul(&z, self.out.of(params), n, c, c);
        for (o, xv) in out.iter_mut().zip(x) {
            *o += xv;
        }
        (out, z)
    }

    /// Gradient through the output projection and SiLU; returns `dL/dy`.
    pub(crate) fn post_backward(&self, params: &[f64], y: &[f64], z: &[f64], dout: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let c = self.channels;
        let n = y.len() / c;
        matmul_at_b_acc(z, dout, n, c, c, self.out.of_mut(grads));
        let mut dz = vec![0.0; n * c];
        matmul_a_bt_acc(dout, self.out.of(params), n, c, c, &mut dz);
        for (d, &yv) in dz.iter_mut().zip(y) {
            *d *= silu_grad(yv);
        }
        dz
    }

    /// Gradient through the value projection and LayerNorm. `du` already holds
    /// any contributions from other consumers of `u`; the result is added to `dx`.
    pub(crate) fn pre_backward(
        &self,
        params: &[f64],
        pre: &PreCache,
        dg: &[f64],
        mut du: Vec<f64>,
        grads: &mut [f64],
        dx: &mut [f64],
    ) {
        let c = self.channels;
        let n = pre.rstd.len();
        matmul_at_b_acc(&pre.u, dg, n, c, c, self.value.of_mut(grads));
        matmul_a_bt_acc(dg, self.value.of(params), n, c, c, &mut du);
        let gamma = self.norm_scale.of(params);
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        let mut dxh = vec![0.0; c];
        for i in 0..n {
            let xh = &pre.xhat[i * c..(i + 1) * c];
            let dui = &du[i * c..(i + 1) * c];
            for ch in 0..c {
                dgamma[ch] += dui[ch] * xh[ch];
                dbeta[ch] += dui[ch];
                dxh[ch] = dui[ch] * gamma[ch];
            }
            let m1 = dxh.iter().sum::<f64>() / c as f64;
            let m2 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / c as f64;
            for ch in 0..c {
                dx[i * c + ch] += pre.rstd[i] * (dxh[ch] - m1 - xh[ch] * m2);
            }
        }
        for (g, d) in self.norm_scale.of_mut(grads).iter_mut().zip(dgamma) {
            *g += d;
        }
        for (g, d) in self.norm_shift.of_mut(grads).iter_mut().zip(dbeta) {
            *g += d;
        }
    }
}

/// Relation weights producing the raw attention logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    pub neighbor: Slot,
    /// Absent when every consumer is invariant to a per-voxel shift.
    pub center: Option<Slot>,
    pub offset_bias: Slot,
}

impl Relation {
    pub fn register(b: &mut ParamStoreBuilder, prefix: &str, channels: usize, heads: usize, with_center: bool) -> Self {
        let init = Init::KaimingUniform { fan_in: channels };
        Self {
            neighbor: b.add(format!("{prefix}.rel.neighbor"), &[channels, heads], init),
            center: with_center.then(|| b.add(format!("{prefix}.rel.center"), &[channels, heads], init)),
            offset_bias: b.add(format!("{prefix}.rel.bias"), &[27, heads], Init::Zeros),
        }
    }

    pub fn param_count(channels: usize, heads: usize, with_center: bool) -> usize {
        (1 + with_center as usize) * channels * heads + 27 * heads
    }

    /// Per-voxel neighbor and centre projections, each `N x H`; the centre
    /// projection is zero without a centre weight.
    pub(crate) fn project(&self, params: &[f64], u: &[f64], channels: usize, heads: usize) -> (Vec<f64>, Vec<f64>) {
        let n = u.len() / channels;
        let c = match self.center {
            Some(s) => matmul(u, s.of(params), n, channels, heads),
            None => vec![0.0; n * heads],
        };
        (matmul(u, self.neighbor.of(params), n, channels, heads), c)
    }

    /// Accumulates weight gradients and adds `da Wn^T + dc Wc^T` into `du`.
    /// The offset bias gradient is accumulated by the caller.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        u: &[f64],
        da: &[f64],
        dc: &[f64],
        channels: usize,
        heads: usize,
        grads: &mut [f64],
        du: &mut [f64],
    ) {
        let n = u.len() / channels;
        matmul_at_b_acc(u, da, n, channels, heads, self.neighbor.of_mut(grads));
        matmul_a_bt_acc(da, self.neighbor.of(params), n, heads, channels, du);
        if let Some(s) = self.center {
            matmul_at_b_acc(u, dc, n, channels, heads, s.of_mut(grads));
            matmul_a_bt_acc(dc, s.of(params), n, heads, channels, du);
        }
    }
}
