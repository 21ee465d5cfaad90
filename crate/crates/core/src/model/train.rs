use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::data::SceneData;
use super::eval::evaluate;
use super::net::Model;
use crate::numerics::{adam_step, rng_for, tree_sum, tree_sum_scalars, OptimizerState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub temperature: f64,
    /// Mean per-scene loss before each step of the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_mean_iou: Option<f64>,
    pub val_per_class_iou: Option<Vec<Option<f64>>>,
    /// Train minus validation accuracy.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub param_count: usize,
    pub epochs: Vec<EpochLog>,
    /// Not serialized, so reports stay byte-identical across runs.
    #[serde(skip)]
    pub wall_clock_s: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }
}

fn save(model: &Model, dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    model.to_checkpoint()?.save(&path)?;
    Ok(path)
}

/// Adam on the mean per-scene cross-entropy. Scenes of a batch run in
/// parallel; their gradients are merged in batch order, so results do not
/// depend on the thread count. Checkpoints go to `out` when given.
pub fn train(model: &mut Model, scenes: &[SceneData], val: &[SceneData], cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainReport> {
    if scenes.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    if cfg.batch == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let start = Instant::now();
    let mut state = OptimizerState::new(cfg.optimizer, model.param_count());
    let base_t = model.config.coded.temperature;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let t = model.config.temperature_schedule.at(base_t, epoch, cfg.epochs);
        model.set_temperature(t);
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        order.shuffle(&mut rng_for(model.config.seed, &format!("epoch-{epoch}")));
        let mut losses = Vec::with_capacity(scenes.len());
        let (mut correct, mut labelled) = (0usize, 0usize);
        for batch in order.chunks(cfg.batch) {
            let params = model.store.values();
            let results = batch
                .par_iter()
                .map(|&i| model.loss_and_grad(params, &scenes[i]))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = Vec::with_capacity(results.len());
            for (o, g) in results {
                let loss = o.loss.unwrap_or(0.0);
                if !loss.is_finite() {
                    let checkpoint = out.map(|d| save(model, d, "last_good.ckpt")).transpose()?;
                    return Err(Error::NanLoss { epoch, checkpoint });
                }
                losses.push(loss);
                correct += o.correct;
                labelled += o.labelled;
                grads.push(g);
            }
            let n = grads.len() as f64;
            let mut g = tree_sum(grads).expect("non-empty batch");
            g.iter_mut().for_each(|v| *v /= n);
            adam_step(&mut model.store, &g, &mut state)?;
        }
        let train_loss = tree_sum_scalars(&losses) / losses.len() as f64;
        let train_accuracy = correct as f64 / labelled.max(1) as f64;
        let ev = if cfg.validate && !val.is_empty() { Some(evaluate(model, val)?) } else { None };
        let log = EpochLog {
            epoch,
            temperature: t,
            train_loss,
            train_accuracy,
            val_loss: ev.as_ref().map(|e| e.loss),
            val_accuracy: ev.as_ref().map(|e| e.accuracy),
            val_mean_iou: ev.as_ref().map(|e| e.mean_iou),
            val_per_class_iou: ev.as_ref().map(|e| e.per_class_iou.clone()),
            gap: ev.as_ref().map(|e| train_accuracy - e.accuracy),
        };
        info!(
            "epoch {epoch}: loss {:.4} acc {:.3} val acc {}",
            train_loss,
            train_accuracy,
            log.val_accuracy.map_or("-".into(), |v| format!("{v:.3}"))
        );
        epochs.push(log);
    }
    let checkpoint = out.map(|d| save(model, d, "model.ckpt")).transpose()?;
    Ok(TrainReport {
        param_count: model.param_count(),
        epochs,
        wall_clock_s: start.elapsed().as_secs_f64(),
        checkpoint,
    })
}
