use serde_json::json;

use super::config::{ModelConfig, RegionSource};
use super::data::{prepare_scene, scene_grid, SceneData};
use crate::attention::{
    Block, BlockCache, BlockKind, BlockTrace, CodedBlock, ConvBlock, RegionCodebook, VanillaBlock,
};
use crate::numerics::checkpoint::{sha256_hex, Checkpoint};
use crate::numerics::linalg::{matmul, matmul_a_bt_acc, matmul_at_b_acc};
use crate::numerics::{Init, ParamStore, ParamStoreBuilder, Slot};
use crate::patterns::RegionSet;
use crate::voxel::io::ScenePoint;
use crate::voxel::VoxelMapping;
use crate::{Error, Result};

/// Dense map `x W + b` applied to every voxel row.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Slot,
    pub bias: Slot,
    pub cin: usize,
    pub cout: usize,
}

impl Linear {
    fn register(b: &mut ParamStoreBuilder, name: &str, cin: usize, cout: usize) -> Self {
        Self {
            weight: b.add(format!("{name}.weight"), &[cin, cout], Init::KaimingUniform { fan_in: cin }),
            bias: b.add(format!("{name}.bias"), &[cout], Init::Zeros),
            cin,
            cout,
        }
    }

    pub fn param_count(cin: usize, cout: usize) -> usize {
        cin * cout + cout
    }

    fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len() / self.cin;
        let mut y = matmul(x, self.weight.of(p), n, self.cin, self.cout);
        let b = self.bias.of(p);
        for row in y.chunks_exact_mut(self.cout) {
            for (v, bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        y
    }

    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let n = x.len() / self.cin;
        matmul_at_b_acc(x, dy, n, self.cin, self.cout, self.weight.of_mut(grads));
        let gb = self.bias.of_mut(grads);
        for row in dy.chunks_exact(self.cout) {
            for (g, v) in gb.iter_mut().zip(row) {
                *g += v;
            }
        }
        let mut dx = vec![0.0; n * self.cin];
        matmul_a_bt_acc(dy, self.weight.of(p), n, self.cout, self.cin, &mut dx);
        dx
    }
}

/// Per-channel max over the children of each coarse voxel; the first child
/// wins ties. Returns the pooled rows and the winning fine row per entry.
fn max_pool(x: &[f64], map: &VoxelMapping, c: usize) -> (Vec<f64>, Vec<u32>) {
    let mut out = vec![f64::NEG_INFINITY; map.coarse_len() * c];
    let mut arg = vec![u32::MAX; map.coarse_len() * c];
    for (i, &p) in map.parents().iter().enumerate() {
        let p = p as usize;
        for ch in 0..c {
            let v = x[i * c + ch];
            if arg[p * c + ch] == u32::MAX || v > out[p * c + ch] {
                out[p * c + ch] = v;
                arg[p * c + ch] = i as u32;
            }
        }
    }
    (out, arg)
}

fn unpool(x: &[f64], map: &VoxelMapping, c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(map.fine_len() * c);
    for &p in map.parents() {
        out.extend_from_slice(&x[p as usize * c..(p as usize + 1) * c]);
    }
    out
}

#[derive(Debug, Clone)]
struct Tape {
    input: Vec<f64>,
    enc: Vec<Vec<BlockCache>>,
    pooled: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
    cat: Vec<Vec<f64>>,
    dec: Vec<Vec<BlockCache>>,
    last: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    /// `N x classes`.
    pub logits: Vec<f64>,
    /// Mean cross-entropy over labelled voxels.
    pub loss: Option<f64>,
    pub correct: usize,
    pub labelled: usize,
}

#[derive(Debug, Clone)]
pub struct BlockTraceEntry {
    pub name: String,
    pub level: usize,
    pub trace: BlockTrace,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    regions: Option<RegionSet>,
    stem: Linear,
    enc: Vec<Vec<Block>>,
    down: Vec<Linear>,
    fuse: Vec<Linear>,
    dec: Vec<Vec<Block>>,
    head: Linear,
}

fn block_count(cfg: &ModelConfig, c: usize) -> usize {
    match cfg.kind {
        BlockKind::Conv => ConvBlock::param_count(c, cfg.heads),
        BlockKind::Vanilla => VanillaBlock::param_count(c, cfg.heads),
        BlockKind::Coded => CodedBlock::param_count(c, cfg.heads, cfg.m * cfg.d, cfg.coded.guidance),
    }
}

impl Model {
    pub fn build(config: &ModelConfig, regions: Option<&RegionSet>) -> Result<Self> {
        config.validate()?;
        let levels = config.channels.len();
        let ch = &config.channels;
        let mut codebooks = Vec::with_capacity(levels);
        if config.kind == BlockKind::Coded {
            for stride in config.strides() {
                let cb = match config.regions {
                    RegionSource::CodebookOnly => RegionCodebook::codebook_only(config.m, config.d)?,
                    RegionSource::Mined => {
                        let set = regions.ok_or_else(|| Error::invalid("coded model with mined regions needs a region codebook"))?;
                        if set.m != config.m || set.d != config.d {
                            return Err(Error::invalid(format!(
                                "region codebook is {}x{}, model expects {}x{}",
                                set.m, set.d, config.m, config.d
                            )));
                        }
                        if !set.strides.contains_key(&stride) {
                            return Err(Error::invalid(format!("region codebook has no stride {stride}")));
                        }
                        RegionCodebook::from_regions(set, stride)?
                    }
                };
                codebooks.push(cb);
            }
        }
        let mut b = ParamStoreBuilder::new(config.seed);
        let make = |b: &mut ParamStoreBuilder, name: &str, level: usize| -> Result<Block> {
            let c = ch[level];
            Ok(match config.kind {
                BlockKind::Conv => Block::Conv(ConvBlock::register(b, name, c, config.heads)?),
                BlockKind::Vanilla => Block::Vanilla(VanillaBlock::register(b, name, c, config.heads)?),
                BlockKind::Coded => {
                    Block::Coded(CodedBlock::register(b, name, c, config.heads, codebooks[level].clone(), config.coded)?)
                }
            })
        };
        let stem = Linear::register(&mut b, "stem", config.in_channels, ch[0]);
        let mut enc = Vec::new();
        let mut down = Vec::new();
        for s in 0..levels {
            let blocks = (0..config.blocks)
                .map(|i| make(&mut b, &format!("enc{s}.b{i}"), s))
                .collect::<Result<Vec<_>>>()?;
            enc.push(blocks);
            if s + 1 < levels {
                down.push(Linear::register(&mut b, &format!("down{s}"), ch[s], ch[s + 1]));
            }
        }
        let mut fuse = Vec::new();
        let mut dec = Vec::new();
        for s in 0..levels - 1 {
            fuse.push(Linear::register(&mut b, &format!("dec{s}.fuse"), ch[s] + ch[s + 1], ch[s]));
            let blocks = (0..config.blocks)
                .map(|i| make(&mut b, &format!("dec{s}.b{i}"), s))
                .collect::<Result<Vec<_>>>()?;
            dec.push(blocks);
        }
        let head = Linear::register(&mut b, "head", ch[0], config.classes);
        let mut store = b.build();
        store.freeze_matching(".temperature");
        let model = Self {
            config: config.clone(),
            store,
            regions: if config.kind == BlockKind::Coded && config.regions == RegionSource::Mined {
                regions.cloned()
            } else {
                None
            },
            stem,
            enc,
            down,
            fuse,
            dec,
            head,
        };
        debug_assert_eq!(model.store.len(), Self::expected_param_count(config));
        Ok(model)
    }

    /// Closed-form parameter count; see the README for the formula.
    pub fn expected_param_count(cfg: &ModelConfig) -> usize {
        let ch = &cfg.channels;
        let s_count = ch.len();
        let mut n = Linear::param_count(cfg.in_channels, ch[0]) + Linear::param_count(ch[0], cfg.classes);
        for s in 0..s_count {
            n += cfg.blocks * block_count(cfg, ch[s]);
            if s + 1 < s_count {
                n += Linear::param_count(ch[s], ch[s + 1]);
                n += Linear::param_count(ch[s] + ch[s + 1], ch[s]) + cfg.blocks * block_count(cfg, ch[s]);
            }
        }
        n
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }

    pub fn regions(&self) -> Option<&RegionSet> {
        self.regions.as_ref()
    }

    /// All blocks with their U-Net level, encoder first.
    pub fn blocks(&self) -> Vec<(usize, &Block)> {
        let mut v: Vec<(usize, &Block)> = Vec::new();
        for (s, bs) in self.enc.iter().enumerate() {
            v.extend(bs.iter().map(|b| (s, b)));
        }
        for (s, bs) in self.dec.iter().enumerate().rev() {
            v.extend(bs.iter().map(|b| (s, b)));
        }
        v
    }

    /// Neighbor-table dilations each level must provide.
    pub fn level_dilations(&self) -> Vec<Vec<u32>> {
        let mut out = vec![vec![1u32]; self.config.channels.len()];
        for (s, b) in self.blocks() {
            out[s].extend(b.dilations());
        }
        for d in &mut out {
            d.sort_unstable();
            d.dedup();
        }
        out
    }

    pub fn prepare(&self, points: &[ScenePoint]) -> Result<SceneData> {
        let grid = scene_grid(points, self.config.voxel_size, self.config.height_scale)?;
        prepare_scene(grid, &self.level_dilations())
    }

    /// Writes `t` into every guidance temperature slot.
    pub fn set_temperature(&mut self, t: f64) {
        let slots: Vec<Slot> = self
            .blocks()
            .iter()
            .filter_map(|(_, b)| b.as_coded().and_then(|c| c.temperature))
            .collect();
        for s in slots {
            self.store.get_mut(s)[0] = t;
        }
    }

    fn check_scene(&self, data: &SceneData) -> Result<()> {
        if data.levels.len() != self.config.channels.len() || data.grid.channels() != self.config.in_channels {
            return Err(Error::structural("scene was prepared for a different model"));
        }
        Ok(())
    }

    fn run(&self, params: &[f64], data: &SceneData, keep: bool, mut traces: Option<&mut Vec<BlockTraceEntry>>) -> Result<(Vec<f64>, Option<Tape>)> {
        self.check_scene(data)?;
        let levels = self.config.channels.len();
        let ch = &self.config.channels;
        let input = data.grid.features().to_vec();
        let mut h = self.stem.forward(params, &input);
        let mut tape = Tape {
            input,
            enc: Vec::new(),
            pooled: Vec::new(),
            argmax: Vec::new(),
            cat: Vec::new(),
            dec: vec![Vec::new(); levels.saturating_sub(1)],
            last: Vec::new(),
        };
        let mut apply = |blocks: &[Block], level: usize, h: &mut Vec<f64>, caches: &mut Vec<BlockCache>| -> Result<()> {
            let geom = &data.levels[level];
            for b in blocks {
                if let Some(t) = traces.as_deref_mut() {
                    if let Some(trace) = b.trace(params, h, geom)? {
                        t.push(BlockTraceEntry { name: b.name().to_string(), level, trace });
                    }
                }
                if keep {
                    let (out, cache) = b.forward_train(params, h, geom)?;
                    caches.push(cache);
                    *h = out;
                } else {
                    *h = b.forward(params, h, geom)?;
                }
            }
            Ok(())
        };
        let mut skips = Vec::with_capacity(levels);
        for s in 0..levels {
            let mut caches = Vec::new();
            apply(&self.enc[s], s, &mut h, &mut caches)?;
            tape.enc.push(caches);
            if s + 1 < levels {
                skips.push(h.clone());
                let (pooled, arg) = max_pool(&h, &data.mappings[s], ch[s]);
                h = self.down[s].forward(params, &pooled);
                tape.pooled.push(pooled);
                tape.argmax.push(arg);
            }
        }
        tape.cat = vec![Vec::new(); levels.saturating_sub(1)];
        for s in (0..levels.saturating_sub(1)).rev() {
            let up = unpool(&h, &data.mappings[s], ch[s + 1]);
            let n = data.mappings[s].fine_len();
            let mut cat = Vec::with_capacity(n * (ch[s] + ch[s + 1]));
            for i in 0..n {
                cat.extend_from_slice(&skips[s][i * ch[s]..(i + 1) * ch[s]]);
                cat.extend_from_slice(&up[i * ch[s + 1]..(i + 1) * ch[s + 1]]);
            }
            h = self.fuse[s].forward(params, &cat);
            tape.cat[s] = cat;
            let mut caches = Vec::new();
            apply(&self.dec[s], s, &mut h, &mut caches)?;
            tape.dec[s] = caches;
        }
        let logits = self.head.forward(params, &h);
        tape.last = h;
        Ok((logits, keep.then_some(tape)))
    }

    fn backward(&self, params: &[f64], data: &SceneData, tape: &Tape, dlogits: &[f64], grads: &mut [f64]) -> Result<()> {
        let levels = self.config.channels.len();
        let ch = &self.config.channels;
        let mut dh = self.head.backward(params, &tape.last, dlogits, grads);
        let mut dskips = vec![Vec::new(); levels.saturating_sub(1)];
        for s in 0..levels.saturating_sub(1) {
            for (b, cache) in self.dec[s].iter().zip(&tape.dec[s]).rev() {
                dh = b.backward(params, &data.levels[s], cache, &dh, grads)?;
            }
            let dcat = self.fuse[s].backward(params, &tape.cat[s], &dh, grads);
            let (cs, cn) = (ch[s], ch[s + 1]);
            let map = &data.mappings[s];
            let mut dskip = Vec::with_capacity(map.fine_len() * cs);
            let mut dcoarse = vec![0.0; map.coarse_len() * cn];
            for (i, &p) in map.parents().iter().enumerate() {
                let row = &dcat[i * (cs + cn)..(i + 1) * (cs + cn)];
                dskip.extend_from_slice(&row[..cs]);
                for (d, v) in dcoarse[p as usize * cn..(p as usize + 1) * cn].iter_mut().zip(&row[cs..]) {
                    *d += v;
                }
            }
            dskips[s] = dskip;
            dh = dcoarse;
        }
        for s in (0..levels).rev() {
            if s + 1 < levels {
                let dpooled = self.down[s].backward(params, &tape.pooled[s], &dh, grads);
                let mut d = std::mem::take(&mut dskips[s]);
                for (k, &i) in tape.argmax[s].iter().enumerate() {
                    d[i as usize * ch[s] + k % ch[s]] += dpooled[k];
                }
                dh = d;
            }
            for (b, cache) in self.enc[s].iter().zip(&tape.enc[s]).rev() {
                dh = b.backward(params, &data.levels[s], cache, &dh, grads)?;
            }
        }
        self.stem.backward(params, &tape.input, &dh, grads);
        Ok(())
    }

    pub fn forward(&self, data: &SceneData) -> Result<ModelOutput> {
        let (logits, _) = self.run(self.store.values(), data, false, None)?;
        Ok(self.score(logits, data.labels()).0)
    }

    /// Loss, metrics and the parameter gradient of the mean cross-entropy.
    pub fn loss_and_grad(&self, params: &[f64], data: &SceneData) -> Result<(ModelOutput, Vec<f64>)> {
        let (logits, tape) = self.run(params, data, true, None)?;
        let (out, dlogits) = self.score(logits, data.labels());
        let mut grads = vec![0.0; params.len()];
        if out.labelled > 0 {
            self.backward(params, data, &tape.expect("kept"), &dlogits, &mut grads)?;
        }
        Ok((out, grads))
    }

    /// Mean cross-entropy at arbitrary parameter values.
    pub fn loss_at(&self, params: &[f64], data: &SceneData) -> Result<f64> {
        let (logits, _) = self.run(params, data, false, None)?;
        self.score(logits, data.labels())
            .0
            .loss
            .ok_or_else(|| Error::invalid("scene has no labels"))
    }

    fn score(&self, logits: Vec<f64>, labels: Option<&[u32]>) -> (ModelOutput, Vec<f64>) {
        let k = self.config.classes;
        let mut dlogits = vec![0.0; logits.len()];
        let Some(labels) = labels else {
            return (ModelOutput { logits, loss: None, correct: 0, labelled: 0 }, dlogits);
        };
        let n = labels.len();
        let mut loss = 0.0;
        let mut correct = 0;
        for (i, &y) in labels.iter().enumerate() {
            let row = &logits[i * k..(i + 1) * k];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            loss += z.ln() + mx - row[y as usize];
            if argmax(row) == y as usize {
                correct += 1;
            }
            for c in 0..k {
                let p = (row[c] - mx).exp() / z;
                dlogits[i * k + c] = (p - if c == y as usize { 1.0 } else { 0.0 }) / n as f64;
            }
        }
        let out = ModelOutput { logits, loss: Some(loss / n as f64), correct, labelled: n };
        (out, dlogits)
    }

    pub fn predict(&self, data: &SceneData) -> Result<Vec<u32>> {
        let out = self.forward(data)?;
        Ok(out.logits.chunks_exact(self.config.classes).map(|r| argmax(r) as u32).collect())
    }

    /// Choice traces of every coded block for one scene.
    pub fn traces(&self, data: &SceneData) -> Result<Vec<BlockTraceEntry>> {
        let mut t = Vec::new();
        self.run(self.store.values(), data, false, Some(&mut t))?;
        Ok(t)
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let regions = self.regions.as_ref().map(|r| r.to_json()).transpose()?;
        let hash = regions.as_ref().map(|r| sha256_hex(r.as_bytes()));
        let extra = json!({ "regions": regions });
        Ok(Checkpoint::from_store(&self.store, self.config.seed, hash, serde_json::to_value(&self.config)?, extra))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_value(ckpt.header.hyperparameters.clone())?;
        let regions = match ckpt.header.extra.get("regions").and_then(|v| v.as_str()) {
            Some(text) => {
                if let Some(h) = &ckpt.header.codebook_sha256 {
                    if &sha256_hex(text.as_bytes()) != h {
                        return Err(Error::invalid("embedded region codebook does not match its hash"));
                    }
                }
                Some(RegionSet::from_json(text)?)
            }
            None => None,
        };
        let mut model = Self::build(&config, regions.as_ref())?;
        let store = ckpt.to_store()?;
        if store.slices().iter().map(|s| (&s.name, &s.shape)).ne(model.store.slices().iter().map(|s| (&s.name, &s.shape))) {
            return Err(Error::structural("checkpoint layout does not match the model it describes"));
        }
        model.store.values_mut().copy_from_slice(store.values());
        Ok(model)
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
