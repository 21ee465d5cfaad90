use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attention::{BlockKind, CodedOptions};
use crate::numerics::AdamConfig;
use crate::synth::{CorpusConfig, NUM_CLASSES};
use crate::{Error, Result};

/// Where a coded model's region masks come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegionSource {
    /// K-modes regions mined from the training scenes.
    #[default]
    Mined,
    /// Full-cube supports at dilation 1: a plain learned codebook.
    CodebookOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemperatureSchedule {
    Constant,
    /// Cosine anneal from `start` at the first epoch to `end` at the last.
    Cosine { start: f64, end: f64 },
}

impl TemperatureSchedule {
    pub fn at(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match *self {
            Self::Constant => base,
            Self::Cosine { start, end } => {
                if epochs <= 1 {
                    return start;
                }
                let t = epoch as f64 / (epochs - 1) as f64;
                end + (start - end) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Width of each U-Net level; level `s` runs at stride `2^s`.
    pub channels: Vec<usize>,
    /// Attention blocks per encoder level and per decoder level.
    pub blocks: usize,
    pub heads: usize,
    pub m: usize,
    pub d: usize,
    pub kind: BlockKind,
    pub regions: RegionSource,
    pub coded: CodedOptions,
    pub temperature_schedule: TemperatureSchedule,
    pub in_channels: usize,
    pub classes: usize,
    pub voxel_size: f64,
    /// Height feature is `z / height_scale`.
    pub height_scale: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: vec![16, 32],
            blocks: 1,
            heads: 2,
            m: 8,
            d: 3,
            kind: BlockKind::Coded,
            regions: RegionSource::Mined,
            coded: CodedOptions::default(),
            temperature_schedule: TemperatureSchedule::Constant,
            in_channels: 2,
            classes: NUM_CLASSES,
            voxel_size: 0.2,
            height_scale: 2.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::invalid("channels must be a non-empty list of positive widths"));
        }
        if self.heads == 0 {
            return Err(Error::invalid("heads must be positive"));
        }
        if let Some(c) = self.channels.iter().find(|&&c| c % self.heads != 0) {
            return Err(Error::invalid(format!("channel width {c} is not divisible by {} heads", self.heads)));
        }
        if self.kind == BlockKind::Coded && (self.m == 0 || self.d == 0) {
            return Err(Error::invalid("coded blocks need M >= 1 and D >= 1"));
        }
        if self.in_channels == 0 || self.classes < 2 {
            return Err(Error::invalid("need at least one input channel and two classes"));
        }
        if !(self.voxel_size > 0.0) || !(self.height_scale > 0.0) {
            return Err(Error::invalid("voxel size and height scale must be positive"));
        }
        if !(self.coded.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        Ok(())
    }

    /// Strides of the U-Net levels.
    pub fn strides(&self) -> Vec<u32> {
        (0..self.channels.len()).map(|s| 1u32 << s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Scenes per optimizer step.
    pub batch: usize,
    pub optimizer: AdamConfig,
    /// Evaluate on the validation scenes after every epoch.
    pub validate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch: 2,
            optimizer: AdamConfig::default(),
            validate: true,
        }
    }
}

/// Everything one pipeline run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub corpus: CorpusConfig,
    /// Masks sampled per (stride, dilation) when mining regions.
    pub pattern_samples: usize,
    pub pattern_restarts: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            corpus: CorpusConfig::default(),
            pattern_samples: 4000,
            pattern_restarts: 10,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    /// Applies `path=value` overrides, then re-validates.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        let mut v = serde_json::to_value(&self)?;
        for o in overrides {
            apply_override(&mut v, o.as_ref())?;
        }
        let cfg: Self = serde_json::from_value(v)?;
        cfg.model.validate()?;
        Ok(cfg)
    }
}

/// Sets `a.b.c=value` in a JSON tree. The value is parsed as JSON when
/// possible and taken as a string otherwise.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::invalid(format!("override `{spec}` is not of the form path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::invalid(format!("`{}` is not an object", keys[..i].join("."))))?;
        if i + 1 == keys.len() {
            if !obj.contains_key(*key) {
                return Err(Error::invalid(format!("unknown config key `{path}`")));
            }
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*key)
            .ok_or_else(|| Error::invalid(format!("unknown config key `{path}`")))?;
    }
    unreachable!("split yields at least one key")
}
