use super::block::StageCache;
use super::geometry::LevelGeometry;
use super::ops::{aggregate_backward, aggregate_into, relation_backward, relation_logits};
use super::plumbing::{Plumbing, PreCache, Relation};
use crate::numerics::{Init, ParamStoreBuilder, Slot};
use crate::voxel::{ABSENT, NUM_SLOTS};
use crate::Result;

/// Sparse 27-tap per-head convolution at dilation 1.
///
/// The kernel slice is named like the coded block's prototypes so that a
/// `K = 1` coded block built from the same seed starts from the same values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub name: String,
    pub plumbing: Plumbing,
    pub kernel: Slot,
}

impl ConvBlock {
    pub fn register(b: &mut ParamStoreBuilder, name: &str, channels: usize, heads: usize) -> Result<Self> {
        let plumbing = Plumbing::register(b, name, channels, heads)?;
        let std = 1.0 / ((NUM_SLOTS * heads) as f64).sqrt();
        let kernel = b.add(format!("{name}.prototypes"), &[1, NUM_SLOTS, heads], Init::Normal { std });
        Ok(Self {
            name: name.to_string(),
            plumbing,
            kernel,
        })
    }

    pub fn param_count(channels: usize, heads: usize) -> usize {
        Plumbing::param_count(channels) + NUM_SLOTS * heads
    }

    pub(crate) fn stage_forward(&self, params: &[f64], pre: &PreCache, geom: &LevelGeometry) -> Result<(Vec<f64>, StageCache)> {
        let (ch, h) = (self.plumbing.channels, self.plumbing.heads);
        let nb = geom.index(1)?;
        let kernel = self.kernel.of(params);
        let n = pre.rstd.len();
        let mut y = vec![0.0; n * ch];
        for i in 0..n {
            aggregate_into(nb.row(i), kernel, &pre.g, ch, h, &mut y[i * ch..(i + 1) * ch]);
        }
        Ok((y, StageCache::Plain))
    }

    pub(crate) fn stage_backward(
        &self,
        params: &[f64],
        pre: &PreCache,
        geom: &LevelGeometry,
        dy: &[f64],
        grads: &mut [f64],
        dg: &mut [f64],
    ) -> Result<()> {
        let (ch, h) = (self.plumbing.channels, self.plumbing.heads);
        let nb = geom.index(1)?;
        let kernel = self.kernel.of(params);
        let mut dk = vec![0.0; NUM_SLOTS * h];
        for i in 0..pre.rstd.len() {
            aggregate_backward(nb.row(i), kernel, &pre.g, &dy[i * ch..(i + 1) * ch], ch, h, &mut dk, dg);
        }
        for (g, v) in self.kernel.of_mut(grads).iter_mut().zip(dk) {
            *g += v;
        }
        Ok(())
    }
}

/// Local self-attention: per-head softmax of the relation logits over the
/// present neighbors at dilation 1. The softmax cancels any centre term, so
/// the relation has none.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaBlock {
    pub name: String,
    pub plumbing: Plumbing,
    pub relation: Relation,
}

fn slot_softmax(row: &[u32; NUM_SLOTS], f: &[f64], heads: usize, p: &mut [f64]) {
    p.fill(0.0);
    for hh in 0..heads {
        let mut mx = f64::NEG_INFINITY;
        for (o, &e) in row.iter().enumerate() {
            if e != ABSENT {
                mx = mx.max(f[o * heads + hh]);
            }
        }
        let mut s = 0.0;
        for (o, &e) in row.iter().enumerate() {
            if e != ABSENT {
                let v = (f[o * heads + hh] - mx).exp();
                p[o * heads + hh] = v;
                s += v;
            }
        }
        for (o, &e) in row.iter().enumerate() {
            if e != ABSENT {
                p[o * heads + hh] /= s;
            }
        }
    }
}

impl VanillaBlock {
    pub fn register(b: &mut ParamStoreBuilder, name: &str, channels: usize, heads: usize) -> Result<Self> {
        let plumbing = Plumbing::register(b, name, channels, heads)?;
        let relation = Relation::register(b, name, channels, heads, false);
        Ok(Self {
            name: name.to_string(),
            plumbing,
            relation,
        })
    }

    pub fn param_count(channels: usize, heads: usize) -> usize {
        Plumbing::param_count(channels) + Relation::param_count(channels, heads, false)
    }

    pub(crate) fn stage_forward(&self, params: &[f64], pre: &PreCache, geom: &LevelGeometry) -> Result<(Vec<f64>, StageCache)> {
        let (ch, h) = (self.plumbing.channels, self.plumbing.heads);
        let nb = geom.index(1)?;
        let (a, c) = self.relation.project(params, &pre.u, ch, h);
        let bias = self.relation.offset_bias.of(params);
        let n = pre.rstd.len();
        let mut y = vec![0.0; n * ch];
        let mut f = vec![0.0; NUM_SLOTS * h];
        let mut p = vec![0.0; NUM_SLOTS * h];
        for i in 0..n {
            relation_logits(nb.row(i), &a, &c[i * h..(i + 1) * h], bias, h, &mut f);
            if f.iter().any(|v| !v.is_finite()) {
                return Err(crate::Error::NonFiniteLogits { voxel: i });
            }
            slot_softmax(nb.row(i), &f, h, &mut p);
            aggregate_into(nb.row(i), &p, &pre.g, ch, h, &mut y[i * ch..(i + 1) * ch]);
        }
        Ok((y, StageCache::Relation { a, c }))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn stage_backward(
        &self,
        params: &[f64],
        pre: &PreCache,
        geom: &LevelGeometry,
        a: &[f64],
        c: &[f64],
        dy: &[f64],
        grads: &mut [f64],
        dg: &mut [f64],
        du: &mut [f64],
    ) -> Result<()> {
        let (ch, h) = (self.plumbing.channels, self.plumbing.heads);
        let nb = geom.index(1)?;
        let bias = self.relation.offset_bias.of(params);
        let n = pre.rstd.len();
        let sh = NUM_SLOTS * h;
        let (mut f, mut p, mut dp, mut df) = (vec![0.0; sh], vec![0.0; sh], vec![0.0; sh], vec![0.0; sh]);
        let mut da = vec![0.0; n * h];
        let mut dc = vec![0.0; n * h];
        let mut dbias = vec![0.0; sh];
        for i in 0..n {
            let row = nb.row(i);
            relation_logits(row, a, &c[i * h..(i + 1) * h], bias, h, &mut f);
            slot_softmax(row, &f, h, &mut p);
            dp.fill(0.0);
            aggregate_backward(row, &p, &pre.g, &dy[i * ch..(i + 1) * ch], ch, h, &mut dp, dg);
            for hh in 0..h {
                let dot: f64 = (0..NUM_SLOTS).map(|o| p[o * h + hh] * dp[o * h + hh]).sum();
                for o in 0..NUM_SLOTS {
                    df[o * h + hh] = p[o * h + hh] * (dp[o * h + hh] - dot);
                }
            }
            relation_backward(row, &df, h, &mut da, &mut dc[i * h..(i + 1) * h], &mut dbias);
        }
        for (g, v) in self.relation.offset_bias.of_mut(grads).iter_mut().zip(&dbias) {
            *g += v;
        }
        self.relation.backward(params, &pre.u, &da, &dc, ch, h, grads, du);
        Ok(())
    }
}
