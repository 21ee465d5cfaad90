use serde::{Deserialize, Serialize};

use super::baselines::{ConvBlock, VanillaBlock};
use super::coded::{CodedBlock, CodedCache};
use super::geometry::LevelGeometry;
use super::plumbing::{Plumbing, PreCache};
use crate::{Error, Result};

/// One residual attention block of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Conv(ConvBlock),
    Vanilla(VanillaBlock),
    Coded(CodedBlock),
}

/// State kept by a training forward pass for the matching backward pass.
/// An inference forward leaves it empty.
#[derive(Debug, Clone, Default)]
pub struct BlockCache {
    inner: Option<Inner>,
}

impl BlockCache {
    pub fn is_empty(&self) -> bool {
        self.inner.is_none()
    }
}

#[derive(Debug, Clone)]
struct Inner {
    pre: PreCache,
    y: Vec<f64>,
    z: Vec<f64>,
    stage: StageCache,
}

#[derive(Debug, Clone)]
pub(crate) enum StageCache {
    Plain,
    Relation { a: Vec<f64>, c: Vec<f64> },
    Coded(CodedCache),
}

/// Per-voxel choice quantities of a coded block, all row-major over voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTrace {
    pub m: usize,
    pub d: usize,
    pub heads: usize,
    /// `N x K` soft choice from prototype similarity.
    pub w: Vec<f64>,
    /// `N x K` geometric guidance (all ones when guidance is off).
    pub w_prime: Vec<f64>,
    /// `N x K` fused choice actually used for aggregation.
    pub w_f: Vec<f64>,
    /// `N x D x 27 x H` raw attention logits (zero when no relation exists).
    pub raw: Vec<f64>,
    /// `N x D x 27 x H` effective kernels.
    pub projected: Vec<f64>,
}

impl BlockTrace {
    pub fn k(&self) -> usize {
        self.m * self.d
    }

    pub fn len(&self) -> usize {
        self.w.len() / self.k()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.w[i * self.k()..(i + 1) * self.k()]
    }

    pub fn w_f_row(&self, i: usize) -> &[f64] {
        &self.w_f[i * self.k()..(i + 1) * self.k()]
    }
}

impl Block {
    pub fn plumbing(&self) -> &Plumbing {
        match self {
            Block::Conv(b) => &b.plumbing,
            Block::Vanilla(b) => &b.plumbing,
            Block::Coded(b) => &b.plumbing,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Block::Conv(b) => &b.name,
            Block::Vanilla(b) => &b.name,
            Block::Coded(b) => &b.name,
        }
    }

    pub fn channels(&self) -> usize {
        self.plumbing().channels
    }

    /// Dilations whose neighbor tables the block reads.
    pub fn dilations(&self) -> Vec<u32> {
        match self {
            Block::Coded(b) => b.codebook.dilations().to_vec(),
            _ => vec![1],
        }
    }

    pub fn as_coded(&self) -> Option<&CodedBlock> {
        match self {
            Block::Coded(b) => Some(b),
            _ => None,
        }
    }

    /// Inference forward pass.
    pub fn forward(&self, params: &[f64], x: &[f64], geom: &LevelGeometry) -> Result<Vec<f64>> {
        Ok(self.run(params, x, geom, false)?.0)
    }

    /// Forward pass that keeps what [`Block::backward`] needs.
    pub fn forward_train(&self, params: &[f64], x: &[f64], geom: &LevelGeometry) -> Result<(Vec<f64>, BlockCache)> {
        self.run(params, x, geom, true)
    }

    fn run(&self, params: &[f64], x: &[f64], geom: &LevelGeometry, keep: bool) -> Result<(Vec<f64>, BlockCache)> {
        let pl = self.plumbing();
        let n = pl.voxels(x)?;
        if geom.len() != n {
            return Err(Error::structural(format!("geometry has {} voxels, features {n}", geom.len())));
        }
        let pre = pl.pre(params, x)?;
        let (y, stage) = match self {
            Block::Conv(b) => b.stage_forward(params, &pre, geom)?,
            Block::Vanilla(b) => b.stage_forward(params, &pre, geom)?,
            Block::Coded(b) => b.stage_forward(params, &pre, geom, None)?,
        };
        let (out, z) = pl.post(params, x, &y);
        let cache = BlockCache {
            inner: keep.then_some(Inner { pre, y, z, stage }),
        };
        Ok((out, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(
        &self,
        params: &[f64],
        geom: &LevelGeometry,
        cache: &BlockCache,
        dout: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>> {
        let inner = cache.inner.as_ref().ok_or(Error::MissingTrace)?;
        let pl = self.plumbing();
        if dout.len() != inner.y.len() || grads.len() != params.len() {
            return Err(Error::structural("upstream gradient or gradient buffer has the wrong length"));
        }
        let dy = pl.post_backward(params, &inner.y, &inner.z, dout, grads);
        let mut dg = vec![0.0; dy.len()];
        let mut du = vec![0.0; dy.len()];
        match (self, &inner.stage) {
            (Block::Conv(b), StageCache::Plain) => b.stage_backward(params, &inner.pre, geom, &dy, grads, &mut dg)?,
            (Block::Vanilla(b), StageCache::Relation { a, c }) => {
                b.stage_backward(params, &inner.pre, geom, a, c, &dy, grads, &mut dg, &mut du)?
            }
            (Block::Coded(b), StageCache::Coded(cc)) => {
                b.stage_backward(params, &inner.pre, geom, cc, &dy, grads, &mut dg, &mut du)?
            }
            _ => return Err(Error::structural("cache was produced by a different block kind")),
        }
        let mut dx = dout.to_vec();
        pl.pre_backward(params, &inner.pre, &dg, du, grads, &mut dx);
        Ok(dx)
    }

    /// Choice trace of a coded block; `None` for the other kinds.
    pub fn trace(&self, params: &[f64], x: &[f64], geom: &LevelGeometry) -> Result<Option<BlockTrace>> {
        let Block::Coded(b) = self else {
            return Ok(None);
        };
        let pl = self.plumbing();
        let n = pl.voxels(x)?;
        if geom.len() != n {
            return Err(Error::structural(format!("geometry has {} voxels, features {n}", geom.len())));
        }
        let pre = pl.pre(params, x)?;
        let mut trace = BlockTrace {
            m: b.codebook.m(),
            d: b.codebook.d(),
            heads: pl.heads,
            w: Vec::new(),
            w_prime: Vec::new(),
            w_f: Vec::new(),
            raw: Vec::new(),
            projected: Vec::new(),
        };
        b.stage_forward(params, &pre, geom, Some(&mut trace))?;
        Ok(Some(trace))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Conv,
    Vanilla,
    #[default]
    Coded,
}

impl std::str::FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv" => Ok(Self::Conv),
            "vanilla" | "vanilla-attention" => Ok(Self::Vanilla),
            "coded" => Ok(Self::Coded),
            other => Err(Error::invalid(format!("unknown block kind `{other}`"))),
        }
    }
}
