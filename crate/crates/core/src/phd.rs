//! Particle PHD recursion for static targets: Dirac prediction with
//! measurement-driven birth, the weight update, expected cardinality and
//! adaptive-size importance resampling.

use nalgebra::{Matrix3, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::RandomSource;
use crate::error::{Error, Result};
use crate::sensor::{Measurement, SensorModel};
use crate::Vec3;

/// ψ-normaliser below which a measurement is treated as unsupported.
pub const NORMALISER_FLOOR: f64 = 1e-300;

/// Relative weight under which particles are dropped before resampling.
pub const PRUNE_FRACTION: f64 = 1e-12;

/// Weighted particles approximating the intensity function. The weights
/// sum to the expected number of targets, not to one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleSet {
    positions: Vec<Vec3>,
    weights: Vec<f64>,
}

impl ParticleSet {
    pub fn new(positions: Vec<Vec3>, weights: Vec<f64>) -> Result<Self> {
        if positions.len() != weights.len() {
            return Err(Error::Invalid(format!(
                "{} positions but {} weights",
                positions.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Invalid(
                "particle weights must be finite and non-negative".into(),
            ));
        }
        Ok(ParticleSet { positions, weights })
    }

    pub fn empty() -> Self {
        ParticleSet::default()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec3, f64)> {
        self.positions.iter().zip(self.weights.iter().copied())
    }

    /// Total weight inside the closed ball `‖x − center‖ ≤ radius`.
    pub fn mass_within(&self, center: &Vec3, radius: f64) -> f64 {
        self.iter()
            .filter(|(x, _)| (*x - center).norm() <= radius)
            .map(|(_, w)| w)
            .sum()
    }

    /// Copy without the particles whose index is flagged.
    pub fn without(&self, remove: &[bool]) -> ParticleSet {
        let mut out = ParticleSet::default();
        for (i, (x, w)) in self.iter().enumerate() {
            if !remove[i] {
                out.positions.push(*x);
                out.weights.push(w);
            }
        }
        out
    }
}

/// Shape of the birth proposal. Both have the empirical mean of the
/// back-projected measurements and the regularised empirical covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum BirthProposal {
    /// One Gaussian fitted to all measurements.
    Gaussian,
    /// Equal-weight mixture of Gaussians centred on each measurement, with
    /// the regularisation as component covariance. Same first two moments
    /// as `Gaussian`, but no births between simultaneously seen targets.
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// Survival probability of an existing target between steps.
    pub p_s: f64,
    /// Number of birth particles drawn per step with measurements (J_k).
    pub birth_count: usize,
    /// Birth mass per received measurement; a step with |Z| measurements
    /// injects `birth_mass * |Z|` in total.
    pub birth_mass: f64,
    /// Particles allotted per expected target after resampling (ℓ).
    pub particles_per_target: usize,
    pub max_particles: usize,
    pub birth_proposal: BirthProposal,
}

fn default_birth_proposal() -> BirthProposal {
    BirthProposal::Mixture
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            p_s: 1.0,
            birth_count: 130,
            birth_mass: 0.2,
            particles_per_target: 400,
            max_particles: 5000,
            birth_proposal: default_birth_proposal(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_s) {
            return Err(Error::config("p_s must lie in [0, 1]"));
        }
        if !(self.birth_mass >= 0.0) || !self.birth_mass.is_finite() {
            return Err(Error::config("birth_mass must be finite and non-negative"));
        }
        if self.particles_per_target == 0 {
            return Err(Error::config("particles_per_target must be positive"));
        }
        if self.max_particles < self.particles_per_target {
            return Err(Error::config("max_particles must be at least particles_per_target"));
        }
        Ok(())
    }
}

/// Sum of the weights.
pub fn expected_count(p: &ParticleSet) -> f64 {
    p.weights.iter().sum()
}

/// Prediction step. Existing particles stay put with weights scaled by
/// `p_s`. When `z` is non-empty, `birth_count` new particles are drawn from
/// a Gaussian fitted to the Cartesian back-projections of `z`, regularised
/// on the active axes by `(2σ)²` with σ expressed in metres at the measured
/// ranges, sharing `birth_mass · |z|` equally.
pub fn predict(
    p: &ParticleSet,
    z: &[Measurement],
    q: &Vec3,
    cfg: &FilterConfig,
    sensor: &SensorModel,
    rng: &mut RandomSource,
) -> ParticleSet {
    let mut out = ParticleSet {
        positions: p.positions.clone(),
        weights: p.weights.iter().map(|w| w * cfg.p_s).collect(),
    };
    if z.is_empty() || cfg.birth_count == 0 {
        return out;
    }

    let points: Vec<Vec3> = z.iter().map(|m| sensor.inverse(m, q)).collect();
    let n = points.len() as f64;
    let planar = sensor.dimensionality() == 2;
    let w = cfg.birth_mass * n / cfg.birth_count as f64;
    out.positions.reserve(cfg.birth_count);
    out.weights.reserve(cfg.birth_count);

    if cfg.birth_proposal == BirthProposal::Mixture {
        // Births assigned round-robin, so every measurement gets ⌊J/|z|⌋ or one more.
        for j in 0..cfg.birth_count {
            let i = j % points.len();
            let sd = (4.0 * sensor.position_variance_at(z[i].range)).max(1e-12).sqrt();
            let mut x = points[i];
            for a in 0..if planar { 2 } else { 3 } {
                x[a] += sd * rng.sample::<f64, _>(StandardNormal);
            }
            out.positions.push(x);
            out.weights.push(w);
        }
        return out;
    }

    let mean = points.iter().fold(Vector3::zeros(), |acc, x| acc + x) / n;
    let mut cov = points
        .iter()
        .fold(Matrix3::zeros(), |acc, x| acc + (x - mean) * (x - mean).transpose())
        / n;
    let reg = (4.0 * z.iter().map(|m| sensor.position_variance_at(m.range)).sum::<f64>() / n).max(1e-12);
    for a in 0..3 {
        if planar && a == 2 {
            // Placeholder so the factorisation exists; z is pinned below.
            cov[(2, 2)] = 1.0;
        } else {
            cov[(a, a)] += reg;
        }
    }
    let chol = match cov.cholesky() {
        Some(c) => c.l(),
        None => Matrix3::from_diagonal(&Vector3::repeat(reg.sqrt())),
    };

    for _ in 0..cfg.birth_count {
        let e = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let mut x = mean + chol * e;
        if planar {
            x.z = mean.z;
        }
        out.positions.push(x);
        out.weights.push(w);
    }
    out
}

/// Measurement update:
/// `w_i ← [1 − π(x_i) + Σ_z ψ_z(x_i) / C(z)] · w_i` with
/// `C(z) = Σ_j ψ_z(x_j) w_j`. Positions are untouched.
pub fn update(p: &ParticleSet, z: &[Measurement], q: &Vec3, sensor: &SensorModel) -> ParticleSet {
    let n = p.len();
    let mut factor: Vec<f64> = p.positions.iter().map(|x| 1.0 - sensor.detection_prob(x, q)).collect();
    let mut psi = vec![0.0; n];
    for m in z {
        let mut c = 0.0;
        for (i, (x, w)) in p.iter().enumerate() {
            psi[i] = sensor.detection_likelihood(m, x, q);
            c += psi[i] * w;
        }
        if !(c > NORMALISER_FLOOR) {
            continue;
        }
        for i in 0..n {
            factor[i] += psi[i] / c;
        }
    }
    ParticleSet {
        positions: p.positions.clone(),
        weights: p.weights.iter().zip(&factor).map(|(w, f)| w * f).collect(),
    }
}

/// Post-resampling particle count `min(max, max(ℓ, round(ℓ·N̂)))`.
pub fn resampled_count(mass: f64, cfg: &FilterConfig) -> usize {
    let wanted = (cfg.particles_per_target as f64 * mass + 0.5).floor();
    let wanted = if wanted.is_finite() && wanted > 0.0 {
        wanted as usize
    } else {
        0
    };
    wanted.max(cfg.particles_per_target).min(cfg.max_particles)
}

/// Multinomial importance resampling to `resampled_count` particles of
/// equal weight `N̂ / L⁺`. Total mass is preserved; a massless set yields
/// an empty one.
pub fn resample(p: &ParticleSet, cfg: &FilterConfig, rng: &mut RandomSource) -> ParticleSet {
    let mass = expected_count(p);
    if !(mass > 0.0) {
        return ParticleSet::empty();
    }
    let floor = PRUNE_FRACTION * mass;
    let kept: Vec<usize> = (0..p.len()).filter(|&i| p.weights[i] >= floor).collect();
    let dist = match WeightedIndex::new(kept.iter().map(|&i| p.weights[i])) {
        Ok(d) => d,
        Err(_) => return ParticleSet::empty(),
    };
    let count = resampled_count(mass, cfg);
    let w = mass / count as f64;
    let mut out = ParticleSet {
        positions: Vec::with_capacity(count),
        weights: vec![w; count],
    };
    for _ in 0..count {
        out.positions.push(p.positions[kept[dist.sample(rng)]]);
    }
    out
}
