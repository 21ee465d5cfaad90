//! Checkpoint files.
//!
//! Layout: the 8 magic bytes `CVTRCKP1`, a little-endian `u64` header length,
//! the UTF-8 JSON header, then one little-endian `f32` per parameter in flat
//! store order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{ParamSlice, ParamStore};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CVTRCKP1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub param_count: usize,
    pub slices: Vec<ParamSlice>,
    pub seed: u64,
    /// SHA-256 of the region codebook file the model was built from, if any.
    pub codebook_sha256: Option<String>,
    /// Model and optimizer configuration, free-form.
    pub hyperparameters: serde_json::Value,
    /// Anything else the writer wants to carry (region masks, epoch, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub values: Vec<f32>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Checkpoint {
    pub fn from_store(
        store: &ParamStore,
        seed: u64,
        codebook_sha256: Option<String>,
        hyperparameters: serde_json::Value,
        extra: serde_json::Value,
    ) -> Self {
        Self {
            header: CheckpointHeader {
                format_version: 1,
                param_count: store.len(),
                slices: store.slices().to_vec(),
                seed,
                codebook_sha256,
                hyperparameters,
                extra,
            },
            values: store.values().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_store(&self) -> Result<ParamStore> {
        ParamStore::from_parts(
            self.header.slices.clone(),
            self.values.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::invalid("not a checkpoint file (bad magic)"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = &bytes[16..];
        if body.len() < hlen {
            return Err(Error::invalid("truncated checkpoint header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])?;
        let payload = &body[hlen..];
        if payload.len() != 4 * header.param_count {
            return Err(Error::invalid(format!(
                "checkpoint payload holds {} bytes, expected {}",
                payload.len(),
                4 * header.param_count
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self { header, values })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes()?)
            .map_err(|e| Error::io("<checkpoint>", e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
