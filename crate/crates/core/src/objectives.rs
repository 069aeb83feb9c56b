//! Planner objective terms: the exploration bonus field and its score, and
//! the two target-refinement scores.

use serde::{Deserialize, Serialize};

use crate::env::{Environment, ScalarGrid};
use crate::error::{Error, Result};
use crate::phd::ParticleSet;
use crate::sensor::SensorModel;
use crate::targets::Cluster;
use crate::Vec3;

/// Exploration bonus ι on grid nodes. Starts at 1 everywhere and only
/// ever decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationField {
    grid: ScalarGrid,
}

impl ExplorationField {
    pub fn new(env: &Environment, spacing: [f64; 3]) -> Result<Self> {
        Ok(ExplorationField {
            grid: ScalarGrid::covering(env, spacing, 1.0)?,
        })
    }

    pub fn from_grid(grid: ScalarGrid) -> Result<Self> {
        if grid.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("exploration bonus must lie in [0, 1]".into()));
        }
        Ok(ExplorationField { grid })
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn sample(&self, p: &Vec3) -> f64 {
        self.grid.sample(p)
    }

    /// Sum of all node values.
    pub fn total(&self) -> f64 {
        self.grid.values().iter().sum()
    }

    /// Fraction of nodes whose bonus is below `level`.
    pub fn fraction_below(&self, level: f64) -> f64 {
        let v = self.grid.values();
        v.iter().filter(|x| **x < level).count() as f64 / v.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    /// Detection probabilities of the cluster centers.
    CenterProb,
    /// Expected detections of the whole particle set (labelled "MI").
    MiSurrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Weight of the exploration term.
    pub alpha: f64,
    pub mode: RefinementMode,
}

impl ObjectiveConfig {
    /// `α = T_m / G`: one confident cluster roughly balances one unexplored
    /// waypoint.
    pub fn default_alpha(t_m: f64, peak_detection: f64) -> f64 {
        t_m / peak_detection
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::config("alpha must be finite and non-negative"));
        }
        Ok(())
    }
}

/// `ι ← ι · (1 − π(node, q))` at every node.
pub fn bonus_update(field: &mut ExplorationField, q: &Vec3, sensor: &SensorModel) {
    let positions: Vec<Vec3> = field.grid.node_positions().collect();
    for (v, x) in field.grid.values_mut().iter_mut().zip(&positions) {
        let p = sensor.detection_prob(x, q);
        *v = (*v * (1.0 - p)).clamp(0.0, 1.0);
    }
}

/// Interpolated bonus summed along the candidate positions.
pub fn exploration_score(field: &ExplorationField, seq: &[Vec3]) -> f64 {
    seq.iter().map(|q| field.sample(q)).sum()
}

/// Σ_j Σ_i π(center_i, q_j).
pub fn center_prob_score(clusters: &[Cluster], seq: &[Vec3], sensor: &SensorModel) -> f64 {
    seq.iter()
        .map(|q| {
            clusters
                .iter()
                .map(|c| sensor.detection_prob(&c.center, q))
                .sum::<f64>()
        })
        .sum()
}

/// Σ_j Σ_i w_i π(x_i, q_j): the expected number of detections along the
/// sequence. Maximising it drives down the chance of an empty measurement
/// set, which is what a mutual-information refinement rewards.
pub fn mi_surrogate_score(p: &ParticleSet, seq: &[Vec3], sensor: &SensorModel) -> f64 {
    seq.iter()
        .map(|q| p.iter().map(|(x, w)| w * sensor.detection_prob(x, q)).sum::<f64>())
        .sum()
}
