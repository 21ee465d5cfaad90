use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numerics::rng_for;
use crate::voxel::io::ScenePoint;
use crate::{Error, Result};

pub const NUM_CLASSES: usize = 4;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["floor", "wall", "pole", "clutter"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    /// Horizontal rectangle (ground or table top).
    Floor,
    /// Vertical rectangle along one axis.
    Wall,
    /// Two walls meeting at a right angle at the origin.
    Corner,
    /// Vertical pole.
    Edge,
    /// Random points filling a box.
    Scatter,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 5] = [Self::Floor, Self::Wall, Self::Corner, Self::Edge, Self::Scatter];

    pub fn default_label(self) -> u32 {
        match self {
            Self::Floor => 0,
            Self::Wall | Self::Corner => 1,
            Self::Edge => 2,
            Self::Scatter => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

/// One primitive. `origin` is the minimum corner; `extent` is `(dx, dy, dz)`
/// for floors and clutter, `(length, _, height)` for walls, corners and poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub origin: [f64; 3],
    pub extent: [f64; 3],
    /// Direction of a wall; the first leg of a corner.
    pub axis: Axis,
    /// Point spacing in metres at the scene centre.
    pub spacing: f64,
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Sensor position in the horizontal plane; density decays with distance from it.
    pub center: [f64; 2],
    /// Areal density decays as `exp(-lambda r)` (per metre).
    pub lambda: f64,
    /// Gaussian jitter, metres.
    pub sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::invalid("scene needs at least one primitive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("lambda and sigma must be finite and non-negative"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let needed: &[usize] = match p.kind {
                PrimitiveKind::Floor => &[0, 1],
                PrimitiveKind::Wall | PrimitiveKind::Corner => &[0, 2],
                PrimitiveKind::Edge => &[2],
                PrimitiveKind::Scatter => &[0, 1, 2],
            };
            if needed.iter().any(|&a| !(p.extent[a] > 0.0 && p.extent[a].is_finite())) {
                return Err(Error::invalid(format!("primitive {i} ({:?}) has a degenerate extent {:?}", p.kind, p.extent)));
            }
            if !(p.spacing > 0.0 && p.spacing.is_finite()) {
                return Err(Error::invalid(format!("primitive {i} has non-positive spacing")));
            }
            if p.label as usize >= NUM_CLASSES {
                return Err(Error::invalid(format!("primitive {i} label {} is not below {NUM_CLASSES}", p.label)));
            }
        }
        Ok(())
    }
}

struct Sampler<'a> {
    spec: &'a SceneSpec,
    out: Vec<ScenePoint>,
}

impl Sampler<'_> {
    fn radius(&self, x: f64, y: f64) -> f64 {
        (x - self.spec.center[0]).hypot(y - self.spec.center[1])
    }

    /// Spacing grows as `exp(lambda r / 2)` so areal density falls as `exp(-lambda r)`.
    fn spacing(&self, base: f64, r: f64) -> f64 {
        base * (0.5 * self.spec.lambda * r).exp()
    }

    fn push(&mut self, p: [f64; 3], label: u32) {
        self.out.push(ScenePoint { position: p, label: Some(label) });
    }

    fn floor(&mut self, p: &Primitive, phase: f64) {
        let [x0, y0, z] = p.origin;
        let (x1, y1) = (x0 + p.extent[0], y0 + p.extent[1]);
        let [cx, cy] = self.spec.center;
        let inside = |x: f64, y: f64| x >= x0 && x <= x1 && y >= y0 && y <= y1;
        let rmin = if inside(cx, cy) { 0.0 } else { self.radius(cx.clamp(x0, x1), cy.clamp(y0, y1)) };
        let rmax = [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]
            .iter()
            .map(|&(x, y)| self.radius(x, y))
            .fold(0.0, f64::max);
        if rmin == 0.0 {
            self.push([cx, cy, z], p.label);
        }
        // Polar rings around the sensor, as a scanning sensor would produce.
        let mut r = rmin.max(self.spacing(p.spacing, rmin) * 0.5);
        while r <= rmax {
            let s = self.spacing(p.spacing, r);
            let count = ((std::f64::consts::TAU * r) / s).ceil().max(1.0) as usize;
            for k in 0..count {
                let t = phase + std::f64::consts::TAU * k as f64 / count as f64;
                let (x, y) = (cx + r * t.cos(), cy + r * t.sin());
                if inside(x, y) {
                    self.push([x, y, z], p.label);
                }
            }
            r += s;
        }
    }

    fn wall(&mut self, origin: [f64; 3], axis: Axis, length: f64, height: f64, base: f64, label: u32) {
        let mut u = 0.0;
        while u <= length {
            let (x, y) = match axis {
                Axis::X => (origin[0] + u, origin[1]),
                Axis::Y => (origin[0], origin[1] + u),
            };
            let s = self.spacing(base, self.radius(x, y));
            let mut h = 0.0;
            while h <= height {
                self.push([x, y, origin[2] + h], label);
                h += s;
            }
            u += s;
        }
    }

    fn scatter(&mut self, p: &Primitive, rng: &mut impl Rng) {
        let vol = p.extent[0] * p.extent[1] * p.extent[2];
        let candidates = (vol / p.spacing.powi(3) * 0.25).ceil() as usize;
        for _ in 0..candidates {
            let q = [
                p.origin[0] + rng.gen::<f64>() * p.extent[0],
                p.origin[1] + rng.gen::<f64>() * p.extent[1],
                p.origin[2] + rng.gen::<f64>() * p.extent[2],
            ];
            let keep = (-self.spec.lambda * self.radius(q[0], q[1])).exp();
            if rng.gen::<f64>() < keep {
                self.push(q, p.label);
            }
        }
    }
}

/// Samples a labelled point cloud. Deterministic in the spec, seed included.
pub fn generate(spec: &SceneSpec) -> Result<Vec<ScenePoint>> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, "scene-points");
    let mut s = Sampler { spec, out: Vec::new() };
    for p in &spec.primitives {
        match p.kind {
            PrimitiveKind::Floor => {
                let phase = rng.gen::<f64>() * std::f64::consts::TAU;
                s.floor(p, phase);
            }
            PrimitiveKind::Wall => s.wall(p.origin, p.axis, p.extent[0], p.extent[2], p.spacing, p.label),
            PrimitiveKind::Corner => {
                let other = match p.axis {
                    Axis::X => Axis::Y,
                    Axis::Y => Axis::X,
                };
                s.wall(p.origin, p.axis, p.extent[0], p.extent[2], p.spacing, p.label);
                s.wall(p.origin, other, p.extent[0], p.extent[2], p.spacing, p.label);
            }
            PrimitiveKind::Edge => s.wall(p.origin, Axis::X, 0.0, p.extent[2], p.spacing, p.label),
            PrimitiveKind::Scatter => s.scatter(p, &mut rng),
        }
    }
    let mut points = s.out;
    if spec.sigma > 0.0 {
        let noise = Normal::new(0.0, spec.sigma).expect("finite sigma");
        for p in &mut points {
            for c in &mut p.position {
                *c += noise.sample(&mut rng);
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{build_neighbor_index, occupancy_masks, voxelize, LabeledPoint, OccupancyMask, VoxelCoord};
    use std::collections::BTreeSet;

    fn floor(spacing: f64, lambda: f64, size: f64) -> SceneSpec {
        SceneSpec {
            primitives: vec![Primitive {
                kind: PrimitiveKind::Floor,
                origin: [0.0, 0.0, 0.0],
                extent: [size, size, 0.0],
                axis: Axis::X,
                spacing,
                label: 0,
            }],
            center: [size / 2.0, size / 2.0],
            lambda,
            sigma: 0.0,
            seed: 3,
        }
    }

    fn cells(points: &[ScenePoint], voxel: f64) -> BTreeSet<VoxelCoord> {
        points
            .iter()
            .map(|p| {
                let f = |v: f64| (v / voxel).floor() as i32;
                VoxelCoord::new(f(p.position[0]), f(p.position[1]), f(p.position[2]))
            })
            .collect()
    }

    fn grid(points: &[ScenePoint], voxel: f64) -> crate::voxel::SparseVoxelGrid {
        let lp: Vec<_> = points
            .iter()
            .map(|p| LabeledPoint { position: p.position, features: vec![1.0], label: p.label })
            .collect();
        voxelize(&lp, voxel).unwrap()
    }

    #[test]
    fn flat_floor_is_a_plane() {
        let pts = generate(&floor(0.05, 0.0, 3.0)).unwrap();
        assert!(pts.iter().all(|p| p.position[2] == 0.0 && p.label == Some(0)));
        let g = grid(&pts, 0.1);
        let masks = occupancy_masks(&build_neighbor_index(&g, 1).unwrap());
        let plane = OccupancyMask::horizontal_plane();
        let interior: Vec<_> = g
            .coords()
            .iter()
            .zip(&masks)
            .filter(|(c, _)| c.i > 0 && c.j > 0 && c.i < 29 && c.j < 29)
            .collect();
        assert!(interior.len() > 700);
        let good = interior.iter().filter(|(_, &m)| m == plane).count();
        assert!(good as f64 >= 0.95 * interior.len() as f64, "{good}/{}", interior.len());
    }

    #[test]
    fn walls_are_vertical_planes() {
        let spec = SceneSpec {
            primitives: vec![Primitive {
                kind: PrimitiveKind::Wall,
                origin: [0.0, 1.05, 0.0],
                extent: [3.0, 0.0, 2.0],
                axis: Axis::X,
                spacing: 0.05,
                label: 1,
            }],
            center: [1.5, 0.0],
            lambda: 0.0,
            sigma: 0.0,
            seed: 1,
        };
        let g = grid(&generate(&spec).unwrap(), 0.1);
        let masks = occupancy_masks(&build_neighbor_index(&g, 1).unwrap());
        // Slots whose second unit component is zero.
        let vertical = OccupancyMask::from_slots((0..27).filter(|s| (s / 3) % 3 == 1));
        let interior: Vec<_> = g.coords().iter().zip(&masks).filter(|(c, _)| c.i > 0 && c.i < 29 && c.k > 0 && c.k < 19).collect();
        let good = interior.iter().filter(|(_, &m)| m == vertical).count();
        assert!(good as f64 >= 0.95 * interior.len() as f64, "{good}/{}", interior.len());
    }

    #[test]
    fn strong_falloff_empties_the_far_field() {
        let lambda = 2.0;
        let r0 = 3.0 / lambda;
        let voxel = 0.1;
        let far = |set: &BTreeSet<VoxelCoord>| -> BTreeSet<VoxelCoord> {
            set.iter()
                .copied()
                .filter(|c| {
                    let x = (c.i as f64 + 0.5) * voxel - 4.0;
                    let y = (c.j as f64 + 0.5) * voxel - 4.0;
                    x.hypot(y) > r0
                })
                .collect()
        };
        // The dense run marks every surface cell beyond r0.
        let reference = far(&cells(&generate(&floor(0.03, 0.0, 8.0)).unwrap(), voxel));
        let sparse = far(&cells(&generate(&floor(0.03, lambda, 8.0)).unwrap(), voxel));
        let empty = reference.difference(&sparse).count() as f64 / reference.len() as f64;
        assert!(empty > 0.9, "only {empty} of far cells empty");
    }

    #[test]
    fn same_seed_same_points() {
        let mut spec = floor(0.07, 0.5, 2.0);
        spec.sigma = 0.01;
        spec.primitives.push(Primitive {
            kind: PrimitiveKind::Scatter,
            origin: [0.2, 0.2, 0.0],
            extent: [0.5, 0.5, 0.5],
            axis: Axis::X,
            spacing: 0.07,
            label: 3,
        });
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        let bits = |v: &[ScenePoint]| v.iter().flat_map(|p| p.position.map(f64::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert!(a.iter().any(|p| p.label == Some(3)));
    }

    #[test]
    fn degenerate_extent_is_rejected() {
        let mut spec = floor(0.05, 0.0, 1.0);
        spec.primitives[0].extent[1] = 0.0;
        assert!(generate(&spec).is_err());
        spec.primitives.clear();
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn labels_follow_primitives() {
        let mut spec = floor(0.1, 0.5, 2.0);
        spec.primitives.push(Primitive {
            kind: PrimitiveKind::Edge,
            origin: [0.5, 0.5, 0.0],
            extent: [0.0, 0.0, 1.0],
            axis: Axis::X,
            spacing: 0.1,
            label: 2,
        });
        let pts = generate(&spec).unwrap();
        for p in &pts {
            let on_pole = p.position[0] == 0.5 && p.position[1] == 0.5;
            assert_eq!(p.label, Some(if on_pole { 2 } else { 0 }));
        }
    }
}
