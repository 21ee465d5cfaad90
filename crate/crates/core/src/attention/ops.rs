//! Per-voxel attention kernels.
//!
//! Layouts: a slot-head array is `27 x H` (`o * H + h`); a per-dilation stack
//! is `D x 27 x H`; prototypes are `K x 27 x H`; choice vectors over the
//! codebook are `K = M x D`, shape-major.

use super::codebook::RegionCodebook;
use crate::numerics::softmax_in_place;
use crate::voxel::{NeighborIndex, OccupancyMask, ABSENT, NUM_SLOTS};
use crate::{Error, Result};

/// `<a, b> / sqrt(len)`.
pub fn similarity(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (a.len() as f64).sqrt()
}

/// Prototypes with every entry outside the element's region set to zero.
pub fn masked_prototypes(cb: &RegionCodebook, prototypes: &[f64], heads: usize) -> Vec<f64> {
    let sh = NUM_SLOTS * heads;
    let mut out = prototypes.to_vec();
    for (k, block) in out.chunks_exact_mut(sh).enumerate() {
        let mask = cb.mask(k);
        for (o, row) in block.chunks_exact_mut(heads).enumerate() {
            if !mask.contains(o) {
                row.fill(0.0);
            }
        }
    }
    out
}

/// Relation weights of the raw attention `f`.
#[derive(Debug, Clone, Copy)]
pub struct RelationWeights<'a> {
    /// `C x H`, applied to the neighbor's features.
    pub neighbor: &'a [f64],
    /// `C x H`, applied to the centre voxel's features.
    pub center: &'a [f64],
    /// `27 x H` per-offset bias.
    pub offset_bias: &'a [f64],
    pub channels: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawAttention {
    pub heads: usize,
    pub dilations: usize,
    /// `N x D x 27 x H`; zero at absent slots.
    pub logits: Vec<f64>,
    /// `N x D` occupancy masks of the slots that carry a logit.
    pub valid: Vec<OccupancyMask>,
}

/// `f[o, h] = x_nbr . Wn[:, h] + x_ctr . Wc[:, h] + b[o, h]` at present slots.
pub fn raw_attention(x: &[f64], neighbors: &[&NeighborIndex], rel: &RelationWeights) -> Result<RawAttention> {
    let (c, h) = (rel.channels, rel.heads);
    if rel.neighbor.len() != c * h || rel.center.len() != c * h || rel.offset_bias.len() != NUM_SLOTS * h {
        return Err(Error::structural("relation weight shapes do not match C x H"));
    }
    if c == 0 || x.len() % c != 0 {
        return Err(Error::structural(format!("{} feature values are not a multiple of C = {c}", x.len())));
    }
    let n = x.len() / c;
    if let Some(bad) = neighbors.iter().find(|nb| nb.len() != n) {
        return Err(Error::structural(format!("neighbor table covers {} voxels, features {n}", bad.len())));
    }
    let proj = |w: &[f64]| crate::numerics::linalg::matmul(x, w, n, c, h);
    let a = proj(rel.neighbor);
    let ctr = proj(rel.center);
    let d = neighbors.len();
    let sh = NUM_SLOTS * h;
    let mut logits = vec![0.0; n * d * sh];
    let mut valid = Vec::with_capacity(n * d);
    for i in 0..n {
        for (j, nb) in neighbors.iter().enumerate() {
            let out = &mut logits[(i * d + j) * sh..(i * d + j + 1) * sh];
            valid.push(relation_logits(nb.row(i), &a, &ctr[i * h..(i + 1) * h], rel.offset_bias, h, out));
        }
    }
    Ok(RawAttention { heads: h, dilations: d, logits, valid })
}

/// Fills one `27 x H` logit block; returns the mask of present slots.
#[inline]
pub(crate) fn relation_logits(
    row: &[u32; NUM_SLOTS],
    nbr_proj: &[f64],
    ctr_proj: &[f64],
    bias: &[f64],
    heads: usize,
    out: &mut [f64],
) -> OccupancyMask {
    let mut bits = 0u32;
    for (o, &e) in row.iter().enumerate() {
        let dst = &mut out[o * heads..(o + 1) * heads];
        if e == ABSENT {
            dst.fill(0.0);
            continue;
        }
        bits |= 1 << o;
        let src = &nbr_proj[e as usize * heads..(e as usize + 1) * heads];
        for hh in 0..heads {
            dst[hh] = src[hh] + ctr_proj[hh] + bias[o * heads + hh];
        }
    }
    OccupancyMask(bits)
}

/// `psi_k = <masked theta_k, f_(dilation of k)> / sqrt(27 H)` for every element.
#[inline]
pub(crate) fn similarities_into(f: &[f64], theta_masked: &[f64], cb: &RegionCodebook, heads: usize, out: &mut [f64]) {
    let sh = NUM_SLOTS * heads;
    let scale = 1.0 / (sh as f64).sqrt();
    for (k, o) in out.iter_mut().enumerate() {
        let j = cb.dilation_index(k);
        let fb = &f[j * sh..(j + 1) * sh];
        let tb = &theta_masked[k * sh..(k + 1) * sh];
        *o = fb.iter().zip(tb).map(|(a, b)| a * b).sum::<f64>() * scale;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Soft choice over the `K` elements.
    pub w: Vec<f64>,
    /// `D x 27 x H`: block `j` is the `w`-weighted sum of the masked
    /// prototypes whose dilation index is `j`.
    pub f_p: Vec<f64>,
}

/// Projects one voxel's raw attention (`D x 27 x H`) onto the codebook.
pub fn codebook_project(f: &[f64], cb: &RegionCodebook, prototypes: &[f64], heads: usize, voxel: usize) -> Result<Projection> {
    let sh = NUM_SLOTS * heads;
    if f.len() != cb.d() * sh || prototypes.len() != cb.k() * sh {
        return Err(Error::structural("raw attention or prototype shape does not match the codebook"));
    }
    let theta = masked_prototypes(cb, prototypes, heads);
    let mut w = vec![0.0; cb.k()];
    similarities_into(f, &theta, cb, heads, &mut w);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLogits { voxel });
    }
    softmax_in_place(&mut w);
    let mut f_p = vec![0.0; cb.d() * sh];
    effective_kernel_into(&w, cb, &theta, heads, &mut f_p);
    Ok(Projection { w, f_p })
}

/// `xi[i, j] = |occupancy_j & region_ij| / |region_ij|`, where `occupancy[j]`
/// is the voxel's mask at the codebook's `j`-th dilation.
pub fn matching_degree(occupancy: &[OccupancyMask], cb: &RegionCodebook) -> Vec<f64> {
    let mut out = vec![0.0; cb.k()];
    matching_degree_into(occupancy, cb, &mut out);
    out
}

#[inline]
pub(crate) fn matching_degree_into(occupancy: &[OccupancyMask], cb: &RegionCodebook, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let occ = occupancy[cb.dilation_index(k)];
        *o = occ.intersection_count(cb.mask(k)) as f64 / cb.region_size(k);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guidance {
    /// Softmax over shapes of `sum_j xi / T`.
    pub alpha: Vec<f64>,
    /// Softmax over dilations of `sum_i xi / T`.
    pub beta: Vec<f64>,
    /// `alpha (x) beta`, `M x D`.
    pub w_prime: Vec<f64>,
}

/// Geometry-aware choice `w' = softmax_i(sum_j xi/T) (x) softmax_j(sum_i xi/T)`.
pub fn geometric_guidance(xi: &[f64], m: usize, d: usize, temperature: f64) -> Result<Guidance> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    if xi.len() != m * d {
        return Err(Error::structural(format!("{} matching degrees for M x D = {}", xi.len(), m * d)));
    }
    let mut g = Guidance {
        alpha: vec![0.0; m],
        beta: vec![0.0; d],
        w_prime: vec![0.0; m * d],
    };
    guidance_into(xi, m, d, temperature, &mut g.alpha, &mut g.beta, &mut g.w_prime);
    Ok(g)
}

#[inline]
pub(crate) fn guidance_into(
    xi: &[f64],
    m: usize,
    d: usize,
    temperature: f64,
    alpha: &mut [f64],
    beta: &mut [f64],
    w_prime: &mut [f64],
) {
    alpha.fill(0.0);
    beta.fill(0.0);
    for i in 0..m {
        for j in 0..d {
            let v = xi[i * d + j];
            alpha[i] += v;
            beta[j] += v;
        }
    }
    for a in alpha.iter_mut() {
        *a /= temperature;
    }
    for b in beta.iter_mut() {
        *b /= temperature;
    }
    softmax_in_place(alpha);
    softmax_in_place(beta);
    for i in 0..m {
        for j in 0..d {
            w_prime[i * d + j] = alpha[i] * beta[j];
        }
    }
}

/// Elementwise `w * w'`, optionally renormalised to sum to one.
pub fn fuse_choice(w: &[f64], w_prime: &[f64], renormalize: bool) -> Vec<f64> {
    let mut out: Vec<f64> = w.iter().zip(w_prime).map(|(a, b)| a * b).collect();
    if renormalize {
        let s: f64 = out.iter().sum();
        if s > 0.0 {
            out.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

/// `F[j][o, h] = sum over shapes i of w_f[i, j] * masked theta_ij[o, h]`.
#[inline]
pub(crate) fn effective_kernel_into(w_f: &[f64], cb: &RegionCodebook, theta_masked: &[f64], heads: usize, out: &mut [f64]) {
    let sh = NUM_SLOTS * heads;
    out.fill(0.0);
    for (k, &wk) in w_f.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        let j = cb.dilation_index(k);
        let dst = &mut out[j * sh..(j + 1) * sh];
        for (d, t) in dst.iter_mut().zip(&theta_masked[k * sh..(k + 1) * sh]) {
            *d += wk * t;
        }
    }
}

/// Per-voxel effective kernel from a fused choice.
pub fn effective_kernel(w_f: &[f64], cb: &RegionCodebook, prototypes: &[f64], heads: usize) -> Vec<f64> {
    let theta = masked_prototypes(cb, prototypes, heads);
    let mut out = vec![0.0; cb.d() * NUM_SLOTS * heads];
    effective_kernel_into(w_f, cb, &theta, heads, &mut out);
    out
}

/// Aggregates one voxel: `y[h, e] += sum_o kernel[o, h] * g[nbr(o)][h, e]`.
#[inline]
pub(crate) fn aggregate_into(row: &[u32; NUM_SLOTS], kernel: &[f64], g: &[f64], channels: usize, heads: usize, y: &mut [f64]) {
    let hd = channels / heads;
    for (o, &e) in row.iter().enumerate() {
        if e == ABSENT {
            continue;
        }
        let src = &g[e as usize * channels..(e as usize + 1) * channels];
        for hh in 0..heads {
            let kv = kernel[o * heads + hh];
            if kv == 0.0 {
                continue;
            }
            for (yy, gg) in y[hh * hd..(hh + 1) * hd].iter_mut().zip(&src[hh * hd..(hh + 1) * hd]) {
                *yy += kv * gg;
            }
        }
    }
}

/// Reverse of [`aggregate_into`] for one voxel: accumulates `dL/dkernel`
/// and scatters `dL/dg` into the neighbor rows.
#[inline]
pub(crate) fn aggregate_backward(
    row: &[u32; NUM_SLOTS],
    kernel: &[f64],
    g: &[f64],
    dy: &[f64],
    channels: usize,
    heads: usize,
    dkernel: &mut [f64],
    dg: &mut [f64],
) {
    let hd = channels / heads;
    for (o, &e) in row.iter().enumerate() {
        if e == ABSENT {
            continue;
        }
        let base = e as usize * channels;
        for hh in 0..heads {
            let kv = kernel[o * heads + hh];
            let mut acc = 0.0;
            for t in hh * hd..(hh + 1) * hd {
                acc += dy[t] * g[base + t];
                dg[base + t] += kv * dy[t];
            }
            dkernel[o * heads + hh] += acc;
        }
    }
}

/// Reverse of [`relation_logits`] for one voxel block.
#[inline]
pub(crate) fn relation_backward(
    row: &[u32; NUM_SLOTS],
    df: &[f64],
    heads: usize,
    da: &mut [f64],
    dc_center: &mut [f64],
    dbias: &mut [f64],
) {
    for (o, &e) in row.iter().enumerate() {
        if e == ABSENT {
            continue;
        }
        for hh in 0..heads {
            let v = df[o * heads + hh];
            da[e as usize * heads + hh] += v;
            dc_center[hh] += v;
            dbias[o * heads + hh] += v;
        }
    }
}

/// Applies per-voxel kernels (`N x D x 27 x H`) to values `g` (`N x C`).
/// Absent neighbors contribute nothing.
pub fn apply_attention(g: &[f64], channels: usize, heads: usize, neighbors: &[&NeighborIndex], kernels: &[f64]) -> Result<Vec<f64>> {
    if heads == 0 || channels % heads != 0 {
        return Err(Error::structural(format!("C = {channels} is not divisible by H = {heads}")));
    }
    let n = g.len() / channels;
    let d = neighbors.len();
    let sh = NUM_SLOTS * heads;
    if g.len() != n * channels || kernels.len() != n * d * sh || neighbors.iter().any(|nb| nb.len() != n) {
        return Err(Error::structural("value, kernel and neighbor shapes disagree"));
    }
    let mut y = vec![0.0; n * channels];
    for i in 0..n {
        let yi = &mut y[i * channels..(i + 1) * channels];
        for (j, nb) in neighbors.iter().enumerate() {
            aggregate_into(nb.row(i), &kernels[(i * d + j) * sh..(i * d + j + 1) * sh], g, channels, heads, yi);
        }
    }
    Ok(y)
}
