//! Detection probability, the range/bearing/elevation measurement function
//! and its inverse, and stochastic measurement generation.
//!
//! Two sensor models are supported: the omnidirectional ranging sensor
//! with a smooth exponential field of view (3D), and a binary square
//! field of view with range/bearing measurements (planar mode).

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::RandomSource;
use crate::error::{Error, Result};
use crate::Vec3;

/// Omnidirectional ranging sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig3D {
    /// Peak detection probability.
    #[serde(rename = "G")]
    pub g: f64,
    /// Field-of-view normalisation constants per axis (m).
    #[serde(rename = "F")]
    pub f: [f64; 3],
    /// Noise std for range (m) and both angles (rad).
    pub sigma: f64,
}

impl Default for SensorConfig3D {
    fn default() -> Self {
        SensorConfig3D {
            g: 0.98,
            f: [25.0; 3],
            sigma: 0.5,
        }
    }
}

impl SensorConfig3D {
    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0 && self.g <= 1.0) {
            return Err(Error::config("sensor G must lie in (0, 1]"));
        }
        if self.f.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::config("sensor F must be positive on every axis"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::config("sensor sigma must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Binary square field of view used in planar mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig2D {
    /// Half side lengths of the field-of-view box (m).
    pub half_extent: [f64; 2],
    /// Diagonal of the range/bearing noise covariance.
    #[serde(rename = "R2")]
    pub r2: [f64; 2],
}

impl Default for SensorConfig2D {
    fn default() -> Self {
        SensorConfig2D {
            half_extent: [0.2, 0.2],
            r2: [0.145, 0.112],
        }
    }
}

impl SensorConfig2D {
    pub fn validate(&self) -> Result<()> {
        if self.half_extent.iter().any(|h| !(*h > 0.0)) {
            return Err(Error::config("2D field-of-view half extent must be positive"));
        }
        if self.r2.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::config("2D noise covariance must be positive"));
        }
        Ok(())
    }
}

/// One detection relative to the sensor. `elevation` is always zero in
/// planar mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    /// Range (m), never negative.
    pub range: f64,
    /// Planar bearing in (-π, π].
    pub bearing: f64,
    /// Elevation in [-π/2, π/2].
    pub elevation: f64,
}

pub type MeasurementSet = Vec<Measurement>;

/// Ground-truth target positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TargetSet {
    pub positions: Vec<Vec3>,
}

impl TargetSet {
    pub fn new(positions: Vec<Vec3>) -> Self {
        TargetSet { positions }
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub fn detection_prob(x: &Vec3, q: &Vec3, cfg: &SensorConfig3D) -> f64 {
    let d = x - q;
    let zeta = Vector3::new(d.x / cfg.f[0], d.y / cfg.f[1], d.z / cfg.f[2]);
    cfg.g * (-zeta.norm() / 2.0).exp()
}

/// 1 inside the closed box `q ± half_extent`, else 0.
pub fn detection_prob_2d(x: &Vector2<f64>, q: &Vector2<f64>, cfg: &SensorConfig2D) -> f64 {
    let inside = (x.x - q.x).abs() <= cfg.half_extent[0] && (x.y - q.y).abs() <= cfg.half_extent[1];
    if inside {
        1.0
    } else {
        0.0
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

fn bearing_of(dx: f64, dy: f64) -> f64 {
    if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        wrap_angle(dy.atan2(dx))
    }
}

/// Noiseless measurement of `x` seen from `q`.
pub fn measure_one(x: &Vec3, q: &Vec3) -> Result<Measurement> {
    let d = x - q;
    let range = d.norm();
    if range == 0.0 {
        return Err(Error::DegenerateMeasurement);
    }
    Ok(Measurement {
        range,
        bearing: bearing_of(d.x, d.y),
        elevation: (d.z / range).clamp(-1.0, 1.0).asin(),
    })
}

/// Like [`measure_one`] but total: a coincident target reads as all zeros.
fn observe_3d(x: &Vec3, q: &Vec3) -> Measurement {
    measure_one(x, q).unwrap_or(Measurement {
        range: 0.0,
        bearing: 0.0,
        elevation: 0.0,
    })
}

fn observe_2d(x: &Vec3, q: &Vec3) -> Measurement {
    let dx = x.x - q.x;
    let dy = x.y - q.y;
    Measurement {
        range: dx.hypot(dy),
        bearing: bearing_of(dx, dy),
        elevation: 0.0,
    }
}

/// Cartesian point whose measurement from `q` is `z`.
pub fn inverse_measure(z: &Measurement, q: &Vec3) -> Vec3 {
    let (sb, cb) = z.bearing.sin_cos();
    let (se, ce) = z.elevation.sin_cos();
    q + z.range * Vector3::new(ce * cb, ce * sb, se)
}

/// Either sensor model, behind one interface for the filter and planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorModel {
    Omni(SensorConfig3D),
    Box2d(SensorConfig2D),
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel::Omni(SensorConfig3D::default())
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SensorModel::Omni(c) => c.validate(),
            SensorModel::Box2d(c) => c.validate(),
        }
    }

    pub fn dimensionality(&self) -> u8 {
        match self {
            SensorModel::Omni(_) => 3,
            SensorModel::Box2d(_) => 2,
        }
    }

    pub fn detection_prob(&self, x: &Vec3, q: &Vec3) -> f64 {
        match self {
            SensorModel::Omni(c) => detection_prob(x, q, c),
            SensorModel::Box2d(c) => detection_prob_2d(&x.xy(), &q.xy(), c),
        }
    }

    /// Noiseless measurement; total on the whole space.
    pub fn observe(&self, x: &Vec3, q: &Vec3) -> Measurement {
        match self {
            SensorModel::Omni(_) => observe_3d(x, q),
            SensorModel::Box2d(_) => observe_2d(x, q),
        }
    }

    pub fn inverse(&self, z: &Measurement, q: &Vec3) -> Vec3 {
        match self {
            SensorModel::Omni(_) => inverse_measure(z, q),
            SensorModel::Box2d(_) => {
                let (s, c) = z.bearing.sin_cos();
                Vector3::new(q.x + z.range * c, q.y + z.range * s, q.z)
            }
        }
    }

    /// Per-component noise std in measurement space.
    pub fn noise_std(&self) -> [f64; 3] {
        match self {
            SensorModel::Omni(c) => [c.sigma; 3],
            SensorModel::Box2d(c) => [c.r2[0].sqrt(), c.r2[1].sqrt(), 0.0],
        }
    }

    /// Length scale of the measurement noise, in metres.
    pub fn position_sigma(&self) -> f64 {
        match self {
            SensorModel::Omni(c) => c.sigma,
            SensorModel::Box2d(c) => c.r2[0].max(c.r2[1]).sqrt(),
        }
    }

    /// Isotropic Cartesian variance of a back-projected measurement at
    /// range `d`: range noise plus angular noise converted to metres.
    pub fn position_variance_at(&self, d: f64) -> f64 {
        match self {
            SensorModel::Omni(c) => c.sigma * c.sigma * (1.0 + d * d),
            SensorModel::Box2d(c) => c.r2[0] + d * d * c.r2[1],
        }
    }

    /// Gaussian measurement density g(z | x) with the bearing residual
    /// wrapped.
    pub fn likelihood(&self, z: &Measurement, x: &Vec3, q: &Vec3) -> f64 {
        let h = self.observe(x, q);
        let dr = z.range - h.range;
        let db = wrap_angle(z.bearing - h.bearing);
        match self {
            SensorModel::Omni(c) => {
                let s = c.sigma.max(1e-9);
                let de = z.elevation - h.elevation;
                let q2 = (dr * dr + db * db + de * de) / (s * s);
                (-0.5 * q2).exp() / ((2.0 * PI).powf(1.5) * s * s * s)
            }
            SensorModel::Box2d(c) => {
                let q2 = dr * dr / c.r2[0] + db * db / c.r2[1];
                (-0.5 * q2).exp() / (2.0 * PI * (c.r2[0] * c.r2[1]).sqrt())
            }
        }
    }

    /// ψ_z(x) = π(x, q) · g(z | x).
    pub fn detection_likelihood(&self, z: &Measurement, x: &Vec3, q: &Vec3) -> f64 {
        let p = self.detection_prob(x, q);
        if p == 0.0 {
            0.0
        } else {
            p * self.likelihood(z, x, q)
        }
    }
}

/// Brings a noisy measurement back into the valid ranges.
fn normalise(mut z: Measurement) -> Measurement {
    z.range = z.range.max(0.0);
    z.bearing = wrap_angle(z.bearing);
    z.elevation = z.elevation.clamp(-PI / 2.0, PI / 2.0);
    z
}

/// Draws the measurement set at sensor position `q`: each target is
/// detected independently with probability π and, if detected, yields one
/// noisy measurement. Output order is shuffled so no identity leaks.
pub fn sense(targets: &TargetSet, q: &Vec3, sensor: &SensorModel, rng: &mut RandomSource) -> MeasurementSet {
    let std = sensor.noise_std();
    let mut out = Vec::with_capacity(targets.count());
    for x in &targets.positions {
        let p = sensor.detection_prob(x, q);
        let hit = rng.random::<f64>() < p;
        if !hit {
            continue;
        }
        let h = sensor.observe(x, q);
        let n0: f64 = rng.sample(StandardNormal);
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        out.push(normalise(Measurement {
            range: h.range + std[0] * n0,
            bearing: h.bearing + std[1] * n1,
            elevation: h.elevation + std[2] * n2,
        }));
    }
    out.shuffle(rng);
    out
}
