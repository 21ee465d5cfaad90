use std::io::Write;

use serde::{Deserialize, Serialize};

use super::pipeline::run_pipeline;
use crate::model::{Model, RunConfig};
use crate::{Error, Result};

/// One epoch of one configuration in a generalization-gap comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub config: String,
    pub train_scenes: usize,
    pub epoch: usize,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub gap: Option<f64>,
}

/// Largest tolerated relative parameter-count difference between the two
/// configurations.
pub const PARAM_TOLERANCE: f64 = 0.05;

/// Relative difference of the two parameter counts, or an error when it is
/// above [`PARAM_TOLERANCE`].
pub fn check_param_match(a: &RunConfig, b: &RunConfig) -> Result<f64> {
    let (pa, pb) = (Model::expected_param_count(&a.model), Model::expected_param_count(&b.model));
    let rel = (pa as f64 - pb as f64).abs() / pa.max(pb).max(1) as f64;
    if rel > PARAM_TOLERANCE {
        return Err(Error::invalid(format!(
            "parameter counts {pa} and {pb} differ by {:.1}%, above {:.0}%",
            rel * 100.0,
            PARAM_TOLERANCE * 100.0
        )));
    }
    Ok(rel)
}

/// Trains both configurations on the same corpora, one per entry of
/// `train_sizes` (training scenes; the validation count is kept), and returns
/// train/validation accuracy per epoch.
pub fn generalization_gap(
    a: (&str, &RunConfig),
    b: (&str, &RunConfig),
    train_sizes: &[usize],
) -> Result<Vec<GapRow>> {
    check_param_match(a.1, b.1)?;
    if a.1.corpus != b.1.corpus {
        return Err(Error::invalid("both configurations must use the same corpus"));
    }
    let base = &a.1.corpus;
    let n_val = base.scenes - ((base.scenes as f64) * base.train_ratio).round() as usize;
    let mut rows = Vec::new();
    for &size in train_sizes {
        if size == 0 {
            return Err(Error::invalid("training corpus size must be positive"));
        }
        for (label, cfg) in [a, b] {
            let mut cfg = cfg.clone();
            cfg.corpus.scenes = size + n_val;
            cfg.corpus.train_ratio = size as f64 / (size + n_val) as f64;
            let run = run_pipeline(&cfg, None)?;
            rows.extend(run.report.epochs.iter().map(|e| GapRow {
                config: label.to_string(),
                train_scenes: size,
                epoch: e.epoch,
                train_accuracy: e.train_accuracy,
                val_accuracy: e.val_accuracy,
                gap: e.gap,
            }));
        }
    }
    Ok(rows)
}

/// CSV with header `config,train_scenes,epoch,train_accuracy,val_accuracy,gap`.
pub fn write_gap_csv<W: Write>(out: W, rows: &[GapRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
