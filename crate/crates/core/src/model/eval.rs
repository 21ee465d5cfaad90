use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::SceneData;
use super::net::{argmax, Model};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` for classes absent from the ground truth.
    pub per_class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub voxels: usize,
    /// `confusion[truth][prediction]`.
    pub confusion: Vec<Vec<u64>>,
}

pub fn confusion_matrix(pred: &[u32], truth: &[u32], classes: usize) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(Error::structural(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let mut m = vec![vec![0u64; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p as usize >= classes || t as usize >= classes {
            return Err(Error::invalid(format!("class id out of range: prediction {p}, label {t}")));
        }
        m[t as usize][p as usize] += 1;
    }
    Ok(m)
}

/// Per-class IoU `TP / (TP + FP + FN)`, its mean over classes present in the
/// ground truth, and voxel accuracy.
pub fn metrics_from_confusion(m: &[Vec<u64>]) -> Result<(Vec<Option<f64>>, f64, f64)> {
    let k = m.len();
    let total: u64 = m.iter().flatten().sum();
    if total == 0 {
        return Err(Error::invalid("no labelled voxels to evaluate"));
    }
    let mut ious = Vec::with_capacity(k);
    for c in 0..k {
        let tp = m[c][c];
        let fn_: u64 = m[c].iter().sum::<u64>() - tp;
        let fp: u64 = (0..k).map(|t| m[t][c]).sum::<u64>() - tp;
        let present = tp + fn_ > 0;
        ious.push(present.then(|| tp as f64 / (tp + fp + fn_) as f64));
    }
    let present: Vec<f64> = ious.iter().flatten().copied().collect();
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    let acc = (0..k).map(|c| m[c][c]).sum::<u64>() as f64 / total as f64;
    Ok((ious, miou, acc))
}

pub fn evaluate(model: &Model, scenes: &[SceneData]) -> Result<EvalReport> {
    let k = model.config.classes;
    let parts: Vec<(Vec<Vec<u64>>, f64, usize)> = scenes
        .par_iter()
        .map(|s| {
            let out = model.forward(s)?;
            let Some(labels) = s.labels() else {
                return Ok((vec![vec![0; k]; k], 0.0, 0));
            };
            let pred: Vec<u32> = out.logits.chunks_exact(k).map(|r| argmax(r) as u32).collect();
            let loss_sum = out.loss.unwrap_or(0.0) * labels.len() as f64;
            Ok((confusion_matrix(&pred, labels, k)?, loss_sum, labels.len()))
        })
        .collect::<Result<_>>()?;
    let mut confusion = vec![vec![0u64; k]; k];
    let mut loss = 0.0;
    let mut voxels = 0;
    for (m, l, n) in parts {
        for (row, r) in confusion.iter_mut().zip(m) {
            for (a, b) in row.iter_mut().zip(r) {
                *a += b;
            }
        }
        loss += l;
        voxels += n;
    }
    let (per_class_iou, mean_iou, accuracy) = metrics_from_confusion(&confusion)?;
    Ok(EvalReport {
        per_class_iou,
        mean_iou,
        accuracy,
        loss: loss / voxels as f64,
        voxels,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn perfect_and_complement() {
        let t = [0, 1, 1, 0, 1];
        let m = confusion_matrix(&t, &t, 2).unwrap();
        let (iou, miou, acc) = metrics_from_confusion(&m).unwrap();
        assert_eq!((miou, acc), (1.0, 1.0));
        assert_eq!(iou, vec![Some(1.0), Some(1.0)]);
        let p: Vec<u32> = t.iter().map(|v| 1 - v).collect();
        let (iou, miou, _) = metrics_from_confusion(&confusion_matrix(&p, &t, 2).unwrap()).unwrap();
        assert_eq!(iou, vec![Some(0.0), Some(0.0)]);
        assert_eq!(miou, 0.0);
        assert!(metrics_from_confusion(&[vec![0, 0], vec![0, 0]]).is_err());
    }

    #[test]
    fn matches_direct_counting() {
        let mut rng = crate::numerics::rng_for(4, "iou");
        for _ in 0..20 {
            let n = 200;
            let truth: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let pred: Vec<u32> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            let (iou, miou, acc) = metrics_from_confusion(&confusion_matrix(&pred, &truth, 3).unwrap()).unwrap();
            let mut sum = 0.0;
            for c in 0..3u32 {
                let inter = (0..n).filter(|&i| pred[i] == c && truth[i] == c).count();
                let union = (0..n).filter(|&i| pred[i] == c || truth[i] == c).count();
                let expect = inter as f64 / union as f64;
                assert!((iou[c as usize].unwrap() - expect).abs() < 1e-15);
                sum += expect;
            }
            assert!((miou - sum / 3.0).abs() < 1e-15);
            let hits = (0..n).filter(|&i| pred[i] == truth[i]).count();
            assert_eq!(acc, hits as f64 / n as f64);
        }
    }

    #[test]
    fn absent_classes_are_skipped() {
        let (iou, miou, _) = metrics_from_confusion(&confusion_matrix(&[0, 0, 2], &[0, 0, 0], 3).unwrap()).unwrap();
        assert_eq!(iou[1], None);
        assert_eq!(iou[2], None);
        assert!((miou - 2.0 / 3.0).abs() < 1e-15);
    }
}
