use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::rng_for;
use crate::voxel::{OccupancyMask, NUM_SLOTS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KModesConfig {
    pub clusters: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Number of low bits that carry data.
    pub width: u32,
    /// Bits set in every centroid after the majority update.
    pub forced: u32,
}

impl KModesConfig {
    /// Defaults for 27-bit occupancy masks: centre bit forced, 10 restarts.
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            restarts: 10,
            seed,
            max_iter: 100,
            width: NUM_SLOTS as u32,
            forced: OccupancyMask::CENTER.bits(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub m: usize,
    /// Total Hamming distance from every sample to its centroid.
    pub cost: f64,
    pub centroids: Vec<OccupancyMask>,
    pub assignment: Vec<usize>,
    pub iterations: usize,
    /// Cost after each assignment step of the winning restart.
    pub cost_trace: Vec<f64>,
    pub restart: usize,
}

impl ClusterReport {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.m];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn assign(masks: &[OccupancyMask], centroids: &[OccupancyMask], out: &mut [usize]) -> u64 {
    let mut cost = 0u64;
    for (m, slot) in masks.iter().zip(out.iter_mut()) {
        let (best, d) = centroids
            .iter()
            .enumerate()
            .map(|(c, cm)| (c, m.hamming(*cm)))
            .min_by_key(|&(c, d)| (d, c))
            .expect("at least one centroid");
        *slot = best;
        cost += d as u64;
    }
    cost
}

fn update(masks: &[OccupancyMask], assignment: &[usize], centroids: &mut [OccupancyMask], cfg: &KModesConfig) {
    let k = centroids.len();
    let w = cfg.width as usize;
    let mut counts = vec![0u32; k * w];
    let mut sizes = vec![0u32; k];
    for (m, &a) in masks.iter().zip(assignment) {
        sizes[a] += 1;
        let row = &mut counts[a * w..(a + 1) * w];
        for (b, c) in row.iter_mut().enumerate() {
            *c += m.bits() >> b & 1;
        }
    }
    for (c, centroid) in centroids.iter_mut().enumerate() {
        if sizes[c] == 0 {
            continue;
        }
        let mut bits = 0u32;
        for b in 0..w {
            // strict majority; ties go to 0
            if 2 * counts[c * w + b] > sizes[c] {
                bits |= 1 << b;
            }
        }
        *centroid = OccupancyMask(bits | cfg.forced);
    }
}

fn run_once(masks: &[OccupancyMask], cfg: &KModesConfig, restart: usize) -> ClusterReport {
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, &format!("kmodes-restart-{restart}")));
    let mut seen = BTreeSet::new();
    let mut centroids: Vec<OccupancyMask> = order
        .iter()
        .map(|&i| masks[i])
        .filter(|m| seen.insert(*m))
        .take(cfg.clusters)
        .collect();

    let mut assignment = vec![0usize; masks.len()];
    let mut cost = assign(masks, &centroids, &mut assignment);
    let mut trace = vec![cost as f64];
    let mut next = assignment.clone();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        update(masks, &assignment, &mut centroids, cfg);
        let c = assign(masks, &centroids, &mut next);
        debug_assert!(
            cfg.forced != 0 || c <= cost,
            "k-modes cost increased from {cost} to {c}"
        );
        trace.push(c as f64);
        cost = c;
        if next == assignment {
            break;
        }
        std::mem::swap(&mut assignment, &mut next);
    }
    ClusterReport {
        m: cfg.clusters,
        cost: cost as f64,
        centroids,
        assignment,
        iterations,
        cost_trace: trace,
        restart,
    }
}

/// Best-of-restarts K-modes. Restarts run in parallel; the winner is the
/// lowest cost, then the lowest restart index.
pub fn kmodes(masks: &[OccupancyMask], cfg: &KModesConfig) -> Result<ClusterReport> {
    if cfg.clusters == 0 {
        return Err(Error::invalid("number of clusters must be at least 1"));
    }
    if cfg.width == 0 || cfg.width > 32 {
        return Err(Error::invalid(format!("mask width {} out of range", cfg.width)));
    }
    let distinct = masks.iter().collect::<BTreeSet<_>>().len();
    if cfg.clusters > distinct {
        return Err(Error::TooFewDistinctMasks {
            requested: cfg.clusters,
            distinct,
        });
    }
    let runs: Vec<ClusterReport> = (0..cfg.restarts.max(1))
        .into_par_iter()
        .map(|r| run_once(masks, cfg, r))
        .collect();
    Ok(runs
        .into_iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart"))
}
