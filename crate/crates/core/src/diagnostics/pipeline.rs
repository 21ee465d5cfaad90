use std::path::Path;

use log::info;

use crate::model::{scene_grid, train, Model, RegionSource, RunConfig, SceneData, TrainReport};
use crate::patterns::{build_region_codebook, BuildConfig, RegionSet};
use crate::synth::{make_corpus, Corpus};
use crate::attention::BlockKind;
use crate::Result;

/// Mines regions from the stride-1 grids of the training scenes.
pub fn mine_regions(cfg: &RunConfig, corpus: &Corpus) -> Result<RegionSet> {
    let grids = corpus
        .train
        .iter()
        .map(|s| scene_grid(&s.points, cfg.model.voxel_size, cfg.model.height_scale))
        .collect::<Result<Vec<_>>>()?;
    let mut b = BuildConfig::new(cfg.model.m, cfg.model.d, cfg.model.strides(), cfg.model.seed);
    b.sample_count = Some(cfg.pattern_samples);
    b.restarts = cfg.pattern_restarts;
    build_region_codebook(&grids, &b)
}

/// An untrained model with its prepared training and validation scenes.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub corpus: Corpus,
    pub model: Model,
    pub train: Vec<SceneData>,
    pub val: Vec<SceneData>,
}

/// Generates the corpus, mines regions when the model needs them and builds
/// the model.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    prepare_with(cfg, None)
}

/// [`prepare`] with a given region codebook instead of a freshly mined one.
pub fn prepare_with(cfg: &RunConfig, regions: Option<RegionSet>) -> Result<Prepared> {
    cfg.model.validate()?;
    let corpus = make_corpus(&cfg.corpus)?;
    for w in &corpus.warnings {
        log::warn!("{w}");
    }
    let needs = cfg.model.kind == BlockKind::Coded && cfg.model.regions == RegionSource::Mined;
    let regions = match regions {
        Some(r) => Some(r),
        None if needs => Some(mine_regions(cfg, &corpus)?),
        None => None,
    };
    let model = Model::build(&cfg.model, regions.as_ref())?;
    let train = corpus.train.iter().map(|s| model.prepare(&s.points)).collect::<Result<Vec<_>>>()?;
    let val = corpus.val.iter().map(|s| model.prepare(&s.points)).collect::<Result<Vec<_>>>()?;
    Ok(Prepared { corpus, model, train, val })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prepared: Prepared,
    pub report: TrainReport,
}

/// Corpus, regions, model and training in one call.
pub fn run_pipeline(cfg: &RunConfig, out: Option<&Path>) -> Result<RunOutcome> {
    run_pipeline_with(cfg, None, out)
}

pub fn run_pipeline_with(cfg: &RunConfig, regions: Option<RegionSet>, out: Option<&Path>) -> Result<RunOutcome> {
    let mut prepared = prepare_with(cfg, regions)?;
    info!(
        "training {:?} model with {} parameters on {} scenes",
        cfg.model.kind,
        prepared.model.param_count(),
        prepared.train.len()
    );
    let report = train(&mut prepared.model, &prepared.train, &prepared.val, &cfg.train, out)?;
    Ok(RunOutcome { prepared, report })
}
