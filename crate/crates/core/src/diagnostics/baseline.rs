use std::path::Path;

use super::pipeline::{run_pipeline, RunOutcome};
use crate::attention::{BlockKind, ChoiceMode};
use crate::model::RunConfig;
use crate::{Error, Result};

/// The configuration with `w` replaced by a seeded random simplex point per
/// voxel. Everything else, including the parameter layout, is unchanged.
pub fn random_codebook_config(cfg: &RunConfig, seed: u64) -> Result<RunConfig> {
    if cfg.model.kind != BlockKind::Coded {
        return Err(Error::invalid("the random-codebook baseline needs coded blocks"));
    }
    let mut rs = cfg.clone();
    rs.model.coded.choice = ChoiceMode::FrozenRandom { seed };
    Ok(rs)
}

/// Trains the random-codebook variant of `cfg`.
pub fn random_codebook_baseline(cfg: &RunConfig, seed: u64, out: Option<&Path>) -> Result<RunOutcome> {
    run_pipeline(&random_codebook_config(cfg, seed)?, out)
}
