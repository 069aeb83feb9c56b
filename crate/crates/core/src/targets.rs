//! Weighted K-means over particles, promotion of tight and heavy clusters
//! to found targets, and gating of measurements that likely originate from
//! targets already found.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::RandomSource;
use crate::error::{Error, Result};
use crate::phd::{expected_count, ParticleSet};
use crate::sensor::{Measurement, MeasurementSet, SensorModel};
use crate::Vec3;

pub const KMEANS_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub center: Vec3,
    /// Largest distance from the center to any member.
    pub radius: f64,
    pub mass: f64,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Maximum cluster radius for a found target (m).
    #[serde(rename = "T_r")]
    pub t_r: f64,
    /// Minimum cluster mass for a found target.
    #[serde(rename = "T_m")]
    pub t_m: f64,
    /// Gating distance around found targets (m).
    #[serde(rename = "T_z")]
    pub t_z: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            t_r: 1.1,
            t_m: 2.2,
            t_z: 5.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_r > 0.0 && self.t_m > 0.0 && self.t_z > 0.0) {
            return Err(Error::config("thresholds T_r, T_m and T_z must be positive"));
        }
        Ok(())
    }
}

/// Found target estimates in discovery order. Append-only.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FoundTargets {
    positions: Vec<Vec3>,
    steps: Vec<usize>,
}

impl FoundTargets {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, position: Vec3, step: usize) {
        self.positions.push(position);
        self.steps.push(step);
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    /// Step at which each entry was found.
    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// `max(1, round(N̂))` for a non-empty set, 0 otherwise.
pub fn choose_cluster_count(p: &ParticleSet) -> usize {
    if p.is_empty() {
        return 0;
    }
    let n = (expected_count(p) + 0.5).floor();
    if n.is_finite() && n >= 1.0 {
        n as usize
    } else {
        1
    }
}

fn nearest(x: &Vec3, centers: &[Vec3]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = (x - c).norm_squared();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Farthest-point seeding: the first center is a particle drawn in
/// proportion to weight, each next one the particle farthest from all
/// centers chosen so far. Stops early when every particle coincides with a
/// center.
fn seed_centers(p: &ParticleSet, c: usize, rng: &mut RandomSource) -> Vec<Vec3> {
    let positions = p.positions();
    let first = match WeightedIndex::new(p.weights().iter().copied()) {
        Ok(d) => d.sample(rng),
        Err(_) => rng.random_range(0..positions.len()),
    };
    let mut centers = vec![positions[first]];
    let mut dist: Vec<f64> = positions
        .iter()
        .map(|x| (x - positions[first]).norm_squared())
        .collect();
    while centers.len() < c {
        let (far, d) = dist
            .iter()
            .enumerate()
            .fold((0, -1.0), |(bi, bd), (i, &d)| if d > bd { (i, d) } else { (bi, bd) });
        if d <= 0.0 {
            break;
        }
        let nc = positions[far];
        centers.push(nc);
        for (i, x) in positions.iter().enumerate() {
            dist[i] = dist[i].min((x - nc).norm_squared());
        }
    }
    centers
}

/// Lloyd iteration with weight-averaged centroids. `c` is reduced to the
/// particle count; empty clusters are dropped.
pub fn kmeans(p: &ParticleSet, c: usize, rng: &mut RandomSource) -> Vec<Cluster> {
    if p.is_empty() || c == 0 {
        return Vec::new();
    }
    let c = c.min(p.len());
    let positions = p.positions();
    let weights = p.weights();
    let mut centers = seed_centers(p, c, rng);
    let k = centers.len();
    let mut assign = vec![usize::MAX; p.len()];

    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, x) in positions.iter().enumerate() {
            let a = nearest(x, &centers);
            if a != assign[i] {
                assign[i] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut wsum = vec![0.0; k];
        let mut wacc = vec![Vec3::zeros(); k];
        let mut count = vec![0usize; k];
        let mut acc = vec![Vec3::zeros(); k];
        for (i, x) in positions.iter().enumerate() {
            let a = assign[i];
            wsum[a] += weights[i];
            wacc[a] += x * weights[i];
            count[a] += 1;
            acc[a] += x;
        }
        for j in 0..k {
            if wsum[j] > 0.0 {
                centers[j] = wacc[j] / wsum[j];
            } else if count[j] > 0 {
                centers[j] = acc[j] / count[j] as f64;
            }
        }
    }

    let mut clusters: Vec<Cluster> = centers
        .iter()
        .map(|&center| Cluster {
            center,
            radius: 0.0,
            mass: 0.0,
            members: Vec::new(),
        })
        .collect();
    for (i, x) in positions.iter().enumerate() {
        let cl = &mut clusters[assign[i]];
        cl.members.push(i);
        cl.mass += weights[i];
        cl.radius = cl.radius.max((x - cl.center).norm());
    }
    clusters.retain(|cl| !cl.members.is_empty());
    clusters
}

/// Result of promoting clusters to found targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    /// New found-target positions, duplicates already suppressed.
    pub added: Vec<Vec3>,
    /// Particles left after deleting every confirmed cluster.
    pub particles: ParticleSet,
    /// Indices into the input cluster list that passed both thresholds.
    pub confirmed: Vec<usize>,
    pub removed_mass: f64,
}

/// Confirms every cluster with `radius ≤ T_r` and `mass ≥ T_m`: its
/// members are deleted and its center becomes a found target, unless it
/// lies within `T_r` of a target already found (the particles are deleted
/// either way).
pub fn extract_found(clusters: &[Cluster], th: &Thresholds, p: &ParticleSet, found: &FoundTargets) -> Extraction {
    let mut remove = vec![false; p.len()];
    let mut added: Vec<Vec3> = Vec::new();
    let mut confirmed = Vec::new();
    let mut removed_mass = 0.0;
    for (idx, cl) in clusters.iter().enumerate() {
        if cl.radius > th.t_r || cl.mass < th.t_m {
            continue;
        }
        confirmed.push(idx);
        removed_mass += cl.mass;
        for &m in &cl.members {
            remove[m] = true;
        }
        let duplicate = found
            .positions()
            .iter()
            .chain(added.iter())
            .any(|f| (f - cl.center).norm() < th.t_r);
        if !duplicate {
            added.push(cl.center);
        }
    }
    Extraction {
        added,
        particles: p.without(&remove),
        confirmed,
        removed_mass,
    }
}

/// For each found target in discovery order, removes the single closest
/// remaining measurement whose back-projection lies within `T_z` of it.
/// Returns the kept measurements and the number removed.
pub fn gate_measurements(
    z: &[Measurement],
    found: &FoundTargets,
    th: &Thresholds,
    q: &Vec3,
    sensor: &SensorModel,
) -> (MeasurementSet, usize) {
    let cart: Vec<Vec3> = z.iter().map(|m| sensor.inverse(m, q)).collect();
    let mut alive = vec![true; z.len()];
    let mut gated = 0;
    for f in found.positions() {
        let best = (0..z.len())
            .filter(|&i| alive[i])
            .map(|i| (i, (cart[i] - f).norm()))
            .filter(|&(_, d)| d <= th.t_z)
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd <= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = best {
            alive[i] = false;
            gated += 1;
        }
    }
    let kept = z.iter().zip(&alive).filter(|(_, a)| **a).map(|(m, _)| *m).collect();
    (kept, gated)
}
