use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::block::{BlockTrace, StageCache};
use super::codebook::RegionCodebook;
use super::geometry::LevelGeometry;
use super::ops::{
    aggregate_backward, aggregate_into, effective_kernel_into, guidance_into, masked_prototypes,
    matching_degree_into, relation_backward, relation_logits, similarities_into,
};
use super::plumbing::{Plumbing, PreCache, Relation};
use crate::numerics::{derive_seed, softmax_backward, softmax_in_place, Init, ParamStoreBuilder, Slot};
use crate::voxel::{NeighborIndex, OccupancyMask, NUM_SLOTS};
use crate::{Error, Result};

/// How the codebook choice `w` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ChoiceMode {
    /// Softmax of prototype similarities.
    #[default]
    Learned,
    /// A fixed Dirichlet(1) draw per voxel, keyed by seed, block and coordinate.
    FrozenRandom { seed: u64 },
    /// `1/K` everywhere.
    FrozenUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodedOptions {
    pub guidance: bool,
    pub renormalize: bool,
    pub choice: ChoiceMode,
    /// Initial guidance temperature.
    pub temperature: f64,
}

impl Default for CodedOptions {
    fn default() -> Self {
        Self {
            guidance: true,
            renormalize: false,
            choice: ChoiceMode::Learned,
            temperature: 1.0,
        }
    }
}

/// Codebook-projected attention block.
///
/// Relation weights exist only when `K > 1` and the temperature slot only when
/// guidance is also on, so a `K = 1` block has exactly the parameters of a
/// convolution block.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedBlock {
    pub name: String,
    pub plumbing: Plumbing,
    pub relation: Option<Relation>,
    pub prototypes: Slot,
    pub temperature: Option<Slot>,
    pub codebook: RegionCodebook,
    pub options: CodedOptions,
}

#[derive(Debug, Clone)]
pub(crate) struct CodedCache {
    a: Vec<f64>,
    c: Vec<f64>,
    w: Vec<f64>,
    w_prime: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    w_f: Vec<f64>,
    fused_sum: Vec<f64>,
    temperature: f64,
}

impl CodedBlock {
    pub fn register(
        b: &mut ParamStoreBuilder,
        name: &str,
        channels: usize,
        heads: usize,
        codebook: RegionCodebook,
        options: CodedOptions,
    ) -> Result<Self> {
        if !(options.temperature > 0.0 && options.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", options.temperature)));
        }
        let plumbing = Plumbing::register(b, name, channels, heads)?;
        let k = codebook.k();
        let relation = (k > 1).then(|| Relation::register(b, name, channels, heads, true));
        let std = 1.0 / ((NUM_SLOTS * heads) as f64).sqrt();
        let prototypes = b.add(format!("{name}.prototypes"), &[k, NUM_SLOTS, heads], Init::Normal { std });
        let temperature = (k > 1 && options.guidance)
            .then(|| b.add(format!("{name}.temperature"), &[1], Init::Constant(options.temperature)));
        Ok(Self {
            name: name.to_string(),
            plumbing,
            relation,
            prototypes,
            temperature,
            codebook,
            options,
        })
    }

    pub fn param_count(channels: usize, heads: usize, k: usize, guidance: bool) -> usize {
        let mut n = Plumbing::param_count(channels) + k * NUM_SLOTS * heads;
        if k > 1 {
            n += Relation::param_count(channels, heads, true);
            if guidance {
                n += 1;
            }
        }
        n
    }

    fn temperature_value(&self, params: &[f64]) -> Result<f64> {
        let t = self.temperature.map_or(self.options.temperature, |s| s.of(params)[0]);
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("temperature of block {} must be positive, got {t}", self.name)));
        }
        Ok(t)
    }

    fn guided(&self) -> bool {
        self.options.guidance && self.codebook.k() > 1
    }

    fn learned(&self) -> bool {
        self.options.choice == ChoiceMode::Learned && self.codebook.k() > 1
    }

    fn tables<'g>(&self, geom: &'g LevelGeometry) -> Result<Vec<&'g NeighborIndex>> {
        self.codebook.dilations().iter().map(|&d| geom.index(d)).collect()
    }

    fn occupancy<'g>(&self, geom: &'g LevelGeometry) -> Result<Vec<&'g [OccupancyMask]>> {
        self.codebook.dilations().iter().map(|&d| geom.masks(d)).collect()
    }

    fn frozen_choice(&self, geom: &LevelGeometry, i: usize, out: &mut [f64]) {
        match self.options.choice {
            ChoiceMode::FrozenRandom { seed } => {
                let base = derive_seed(seed, &self.name);
                let mut rng = ChaCha8Rng::seed_from_u64(base ^ geom.coords()[i].mix64());
                for v in out.iter_mut() {
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    *v = -u.ln();
                }
                let s: f64 = out.iter().sum();
                out.iter_mut().for_each(|v| *v /= s);
            }
            _ => out.fill(1.0 / out.len() as f64),
        }
    }

    pub(crate) fn stage_forward(
        &self,
        params: &[f64],
        pre: &PreCache,
        geom: &LevelGeometry,
        mut trace: Option<&mut BlockTrace>,
    ) -> Result<(Vec<f64>, StageCache)> {
        let pl = &self.plumbing;
        let (ch, h) = (pl.channels, pl.heads);
        let n = pre.rstd.len();
        let cb = &self.codebook;
        let (k, m, d) = (cb.k(), cb.m(), cb.d());
        let sh = NUM_SLOTS * h;
        let tables = self.tables(geom)?;
        let occupancy = if self.guided() { self.occupancy(geom)? } else { Vec::new() };
        let temperature = if self.guided() { self.temperature_value(params)? } else { 1.0 };
        let theta = masked_prototypes(cb, self.prototypes.of(params), h);
        let (a, c) = match &self.relation {
            Some(rel) if self.learned() || trace.is_some() => rel.project(params, &pre.u, ch, h),
            _ => (Vec::new(), Vec::new()),
        };
        let bias = self.relation.as_ref().map(|r| r.offset_bias.of(params));

        let mut cache = CodedCache {
            a: Vec::new(),
            c: Vec::new(),
            w: vec![0.0; n * k],
            w_prime: vec![1.0; n * k],
            alpha: vec![0.0; if self.guided() { n * m } else { 0 }],
            beta: vec![0.0; if self.guided() { n * d } else { 0 }],
            w_f: vec![0.0; n * k],
            fused_sum: vec![1.0; n],
            temperature,
        };
        let mut y = vec![0.0; n * ch];
        let mut f = vec![0.0; d * sh];
        let mut kernel = vec![0.0; d * sh];
        let mut xi = vec![0.0; k];
        let mut occ = vec![OccupancyMask::CENTER; d];
        if let Some(t) = trace.as_deref_mut() {
            t.raw = vec![0.0; n * d * sh];
            t.projected = vec![0.0; n * d * sh];
        }

        for i in 0..n {
            let w = &mut cache.w[i * k..(i + 1) * k];
            if !a.is_empty() {
                let bias = bias.expect("relation present");
                for (j, nb) in tables.iter().enumerate() {
                    relation_logits(nb.row(i), &a, &c[i * h..(i + 1) * h], bias, h, &mut f[j * sh..(j + 1) * sh]);
                }
            }
            if k == 1 {
                w[0] = 1.0;
            } else if self.learned() {
                similarities_into(&f, &theta, cb, h, w);
                if w.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteLogits { voxel: i });
                }
                softmax_in_place(w);
            } else {
                self.frozen_choice(geom, i, w);
            }
            let wf = &mut cache.w_f[i * k..(i + 1) * k];
            if self.guided() {
                for (j, o) in occ.iter_mut().enumerate() {
                    *o = occupancy[j][i];
                }
                matching_degree_into(&occ, cb, &mut xi);
                guidance_into(
                    &xi,
                    m,
                    d,
                    temperature,
                    &mut cache.alpha[i * m..(i + 1) * m],
                    &mut cache.beta[i * d..(i + 1) * d],
                    &mut cache.w_prime[i * k..(i + 1) * k],
                );
                for ((o, a), b) in wf.iter_mut().zip(w.iter()).zip(&cache.w_prime[i * k..(i + 1) * k]) {
                    *o = a * b;
                }
            } else {
                wf.copy_from_slice(w);
            }
            if self.options.renormalize {
                let s: f64 = wf.iter().sum();
                if !(s > 0.0) {
                    return Err(Error::NonFiniteLogits { voxel: i });
                }
                wf.iter_mut().for_each(|v| *v /= s);
                cache.fused_sum[i] = s;
            }
            effective_kernel_into(wf, cb, &theta, h, &mut kernel);
            let yi = &mut y[i * ch..(i + 1) * ch];
            for (j, nb) in tables.iter().enumerate() {
                aggregate_into(nb.row(i), &kernel[j * sh..(j + 1) * sh], &pre.g, ch, h, yi);
            }
            if let Some(t) = trace.as_deref_mut() {
                t.raw[i * d * sh..(i + 1) * d * sh].copy_from_slice(&f);
                t.projected[i * d * sh..(i + 1) * d * sh].copy_from_slice(&kernel);
            }
        }
        if let Some(t) = trace {
            t.w = cache.w.clone();
            t.w_prime = cache.w_prime.clone();
            t.w_f = cache.w_f.clone();
        }
        cache.a = a;
        cache.c = c;
        Ok((y, StageCache::Coded(cache)))
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn stage_backward(
        &self,
        params: &[f64],
        pre: &PreCache,
        geom: &LevelGeometry,
        cache: &CodedCache,
        dy: &[f64],
        grads: &mut [f64],
        dg: &mut [f64],
        du: &mut [f64],
    ) -> Result<()> {
        let pl = &self.plumbing;
        let (ch, h) = (pl.channels, pl.heads);
        let n = pre.rstd.len();
        let cb = &self.codebook;
        let (k, m, d) = (cb.k(), cb.m(), cb.d());
        let sh = NUM_SLOTS * h;
        let scale = 1.0 / (sh as f64).sqrt();
        let tables = self.tables(geom)?;
        let occupancy = if self.guided() { self.occupancy(geom)? } else { Vec::new() };
        let theta = masked_prototypes(cb, self.prototypes.of(params), h);
        let learned = self.learned();
        let bias = self.relation.as_ref().map(|r| r.offset_bias.of(params));
        let t = cache.temperature;

        let mut dtheta = vec![0.0; k * sh];
        let mut da = vec![0.0; if learned { n * h } else { 0 }];
        let mut dc = vec![0.0; if learned { n * h } else { 0 }];
        let mut dbias = vec![0.0; if learned { sh } else { 0 }];
        let mut dtemp = 0.0;

        let mut kernel = vec![0.0; d * sh];
        let mut dkernel = vec![0.0; d * sh];
        let mut f = vec![0.0; d * sh];
        let mut df = vec![0.0; d * sh];
        let (mut dwf, mut dv, mut dw, mut dpsi) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
        let (mut dalpha, mut dbeta) = (vec![0.0; m], vec![0.0; d]);
        let (mut dla, mut dlb) = (vec![0.0; m], vec![0.0; d]);
        let mut xi = vec![0.0; k];
        let mut occ = vec![OccupancyMask::CENTER; d];

        for i in 0..n {
            let w = &cache.w[i * k..(i + 1) * k];
            let wp = &cache.w_prime[i * k..(i + 1) * k];
            let wf = &cache.w_f[i * k..(i + 1) * k];
            let dyi = &dy[i * ch..(i + 1) * ch];
            effective_kernel_into(wf, cb, &theta, h, &mut kernel);
            dkernel.fill(0.0);
            for (j, nb) in tables.iter().enumerate() {
                let r = j * sh..(j + 1) * sh;
                aggregate_backward(nb.row(i), &kernel[r.clone()], &pre.g, dyi, ch, h, &mut dkernel[r], dg);
            }
            for kk in 0..k {
                let j = cb.dilation_index(kk);
                let dk = &dkernel[j * sh..(j + 1) * sh];
                let tk = &theta[kk * sh..(kk + 1) * sh];
                dwf[kk] = dk.iter().zip(tk).map(|(a, b)| a * b).sum();
                let dt = &mut dtheta[kk * sh..(kk + 1) * sh];
                for (g, v) in dt.iter_mut().zip(dk) {
                    *g += wf[kk] * v;
                }
            }
            if self.options.renormalize {
                let dot: f64 = dwf.iter().zip(wf).map(|(a, b)| a * b).sum();
                let s = cache.fused_sum[i];
                for (o, g) in dv.iter_mut().zip(&dwf) {
                    *o = (g - dot) / s;
                }
            } else {
                dv.copy_from_slice(&dwf);
            }
            if self.guided() {
                for kk in 0..k {
                    dw[kk] = dv[kk] * wp[kk];
                }
                let alpha = &cache.alpha[i * m..(i + 1) * m];
                let beta = &cache.beta[i * d..(i + 1) * d];
                dalpha.fill(0.0);
                dbeta.fill(0.0);
                for s in 0..m {
                    for j in 0..d {
                        let g = dv[s * d + j] * w[s * d + j];
                        dalpha[s] += g * beta[j];
                        dbeta[j] += g * alpha[s];
                    }
                }
                if self.temperature.is_some() {
                    softmax_backward(alpha, &dalpha, &mut dla);
                    softmax_backward(beta, &dbeta, &mut dlb);
                    for (j, o) in occ.iter_mut().enumerate() {
                        *o = occupancy[j][i];
                    }
                    matching_degree_into(&occ, cb, &mut xi);
                    let mut acc = 0.0;
                    for s in 0..m {
                        for j in 0..d {
                            acc += xi[s * d + j] * (dla[s] + dlb[j]);
                        }
                    }
                    dtemp -= acc / (t * t);
                }
            } else {
                dw.copy_from_slice(&dv);
            }
            if !learned {
                continue;
            }
            softmax_backward(w, &dw, &mut dpsi);
            let bias = bias.expect("relation present");
            for (j, nb) in tables.iter().enumerate() {
                relation_logits(nb.row(i), &cache.a, &cache.c[i * h..(i + 1) * h], bias, h, &mut f[j * sh..(j + 1) * sh]);
            }
            df.fill(0.0);
            for kk in 0..k {
                let g = dpsi[kk] * scale;
                if g == 0.0 {
                    continue;
                }
                let j = cb.dilation_index(kk);
                let fj = &f[j * sh..(j + 1) * sh];
                let tk = &theta[kk * sh..(kk + 1) * sh];
                let dt = &mut dtheta[kk * sh..(kk + 1) * sh];
                for (dst, v) in dt.iter_mut().zip(fj) {
                    *dst += g * v;
                }
                for (dst, v) in df[j * sh..(j + 1) * sh].iter_mut().zip(tk) {
                    *dst += g * v;
                }
            }
            for (j, nb) in tables.iter().enumerate() {
                relation_backward(nb.row(i), &df[j * sh..(j + 1) * sh], h, &mut da, &mut dc[i * h..(i + 1) * h], &mut dbias);
            }
        }

        // Entries outside a region never reach the output.
        for (kk, block) in dtheta.chunks_exact(sh).enumerate() {
            let mask = cb.mask(kk);
            let dst = &mut grads[self.prototypes.offset + kk * sh..self.prototypes.offset + (kk + 1) * sh];
            for (o, (g, v)) in dst.chunks_exact_mut(h).zip(block.chunks_exact(h)).enumerate() {
                if mask.contains(o) {
                    for (a, b) in g.iter_mut().zip(v) {
                        *a += b;
                    }
                }
            }
        }
        if let Some(slot) = self.temperature {
            slot.of_mut(grads)[0] += dtemp;
        }
        if learned {
            let rel = self.relation.as_ref().expect("relation present");
            for (g, v) in rel.offset_bias.of_mut(grads).iter_mut().zip(&dbias) {
                *g += v;
            }
            rel.backward(params, &pre.u, &da, &dc, ch, h, grads, du);
        }
        Ok(())
    }
}
