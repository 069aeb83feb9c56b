//! Experiment description: environment, truth generator, algorithm, every
//! module's parameters, seeds and step budget.

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::{Environment, RandomSource};
use crate::error::{Error, Result};
use crate::objectives::{ObjectiveConfig, RefinementMode};
use crate::phd::FilterConfig;
use crate::planner::{MoveSet, PlannerConfig, SearchContext};
use crate::sensor::{SensorModel, TargetSet};
use crate::targets::Thresholds;
use crate::vehicle::{ObstacleSet, VehicleConfig, VehicleMode};
use crate::Vec3;

/// Random stream reserved for drawing the ground truth.
pub const TRUTH_STREAM: u64 = 0;

const PLACEMENT_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Proposed,
    Lawnmower,
    RefinementOnly,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Proposed => "proposed",
            Algorithm::Lawnmower => "lawnmower",
            Algorithm::RefinementOnly => "refinement-only",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Algorithm::Proposed),
            "lawnmower" => Ok(Algorithm::Lawnmower),
            "refinement-only" => Ok(Algorithm::RefinementOnly),
            other => Err(Error::config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetGenerator {
    /// `count` targets uniform in the environment shrunk by `margin`, at
    /// least `min_separation` apart.
    Uniform {
        count: usize,
        margin: f64,
        min_separation: f64,
    },
    /// `clusters` centers placed like `Uniform`, each with `per_cluster`
    /// targets uniform in a ball of radius `spread` around it.
    Clustered {
        clusters: usize,
        per_cluster: usize,
        spread: f64,
        margin: f64,
        min_separation: f64,
    },
    Manual {
        positions: Vec<[f64; 3]>,
    },
    None,
}

impl TargetGenerator {
    pub fn count(&self) -> usize {
        match self {
            TargetGenerator::Uniform { count, .. } => *count,
            TargetGenerator::Clustered {
                clusters, per_cluster, ..
            } => clusters * per_cluster,
            TargetGenerator::Manual { positions } => positions.len(),
            TargetGenerator::None => 0,
        }
    }

    fn validate(&self, env: &Environment) -> Result<()> {
        let check_margin = |margin: f64| -> Result<()> {
            if !(margin >= 0.0) {
                return Err(Error::config("target margin must be non-negative"));
            }
            let ext = env.extent();
            for axis in 0..3 {
                if env.is_active(axis) && 2.0 * margin >= ext[axis] {
                    return Err(Error::config("target margin leaves no room inside the environment"));
                }
            }
            Ok(())
        };
        match self {
            TargetGenerator::Uniform {
                margin, min_separation, ..
            } => {
                check_margin(*margin)?;
                if !(*min_separation >= 0.0) {
                    return Err(Error::config("min_separation must be non-negative"));
                }
            }
            TargetGenerator::Clustered {
                spread,
                margin,
                min_separation,
                ..
            } => {
                check_margin(*margin)?;
                if !(*spread > 0.0) || !(*min_separation >= 0.0) {
                    return Err(Error::config(
                        "cluster spread must be positive, min_separation non-negative",
                    ));
                }
            }
            TargetGenerator::Manual { positions } => {
                for p in positions {
                    if !env.contains(&Vector3::from(*p)) {
                        return Err(Error::config(format!(
                            "manual target {p:?} lies outside the environment"
                        )));
                    }
                }
            }
            TargetGenerator::None => {}
        }
        Ok(())
    }

    /// Draws the ground truth for one seed.
    pub fn generate(&self, env: &Environment, rng: &mut RandomSource) -> Result<TargetSet> {
        let lo = env.lower();
        let hi = env.upper();
        let draw_in = |rng: &mut RandomSource, margin: f64| -> Vec3 {
            Vector3::from_fn(|axis, _| {
                if env.is_active(axis) {
                    rng.random_range(lo[axis] + margin..hi[axis] - margin)
                } else {
                    lo[axis]
                }
            })
        };
        let far_enough = |p: &Vec3, placed: &[Vec3], sep: f64| placed.iter().all(|o| (o - p).norm() >= sep);
        let mut out: Vec<Vec3> = Vec::new();
        match self {
            TargetGenerator::Uniform {
                count,
                margin,
                min_separation,
            } => {
                for _ in 0..*count {
                    let p = (0..PLACEMENT_ATTEMPTS)
                        .map(|_| draw_in(rng, *margin))
                        .find(|p| far_enough(p, &out, *min_separation))
                        .ok_or_else(|| Error::config("cannot place targets with the requested separation"))?;
                    out.push(p);
                }
            }
            TargetGenerator::Clustered {
                clusters,
                per_cluster,
                spread,
                margin,
                min_separation,
            } => {
                let mut centers: Vec<Vec3> = Vec::new();
                let center_sep = 2.0 * spread + min_separation;
                for _ in 0..*clusters {
                    let c = (0..PLACEMENT_ATTEMPTS)
                        .map(|_| draw_in(rng, *margin))
                        .find(|p| far_enough(p, &centers, center_sep))
                        .ok_or_else(|| Error::config("cannot place target clusters with the requested separation"))?;
                    centers.push(c);
                }
                for c in &centers {
                    for _ in 0..*per_cluster {
                        let p = (0..PLACEMENT_ATTEMPTS)
                            .map(|_| {
                                let d = Vector3::from_fn(|axis, _| {
                                    if env.is_active(axis) {
                                        rng.random_range(-spread..*spread)
                                    } else {
                                        0.0
                                    }
                                });
                                c + d
                            })
                            .find(|p| {
                                (p - c).norm() <= *spread && env.contains(p) && far_enough(p, &out, *min_separation)
                            })
                            .ok_or_else(|| {
                                Error::config("cannot place clustered targets with the requested separation")
                            })?;
                        out.push(p);
                    }
                }
            }
            TargetGenerator::Manual { positions } => {
                out = positions.iter().map(|p| Vector3::from(*p)).collect();
            }
            TargetGenerator::None => {}
        }
        Ok(TargetSet::new(out))
    }
}

/// Planner settings as written in a config file. `alpha` defaults to
/// `T_m / G` and the move set to the environment's default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSpec {
    pub tau: usize,
    pub alpha: Option<f64>,
    pub mode: RefinementMode,
    pub moveset: Option<MoveSet>,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        PlannerSpec {
            tau: 1,
            alpha: None,
            mode: RefinementMode::MiSurrogate,
            moveset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct LawnmowerSpec {
    /// Distance between sweep rows (m).
    pub spacing_xy: f64,
    /// Altitude difference between layers (m).
    pub layer_dz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: String,
    pub env: Environment,
    /// Start position; defaults to the lower corner.
    #[serde(default)]
    pub start: Option<[f64; 3]>,
    pub targets: TargetGenerator,
    #[serde(default)]
    pub obstacles: ObstacleSet,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default)]
    pub vehicle: VehicleConfig,
    /// Exploration-grid node spacing per axis (m).
    pub exploration_spacing: [f64; 3],
    pub lawnmower: LawnmowerSpec,
    pub seeds: Vec<u64>,
    pub max_steps: usize,
    /// Stop a run once every true target has been found.
    #[serde(default = "default_true")]
    pub stop_when_all_found: bool,
    /// Assignment penalty radius for the RMSE (m); defaults to `3 T_r`.
    #[serde(default)]
    pub rmse_penalty: Option<f64>,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Proposed
}

fn default_true() -> bool {
    true
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sensor.validate()?;
        if self.sensor.dimensionality() != self.env.dimensionality {
            return Err(Error::config(
                "sensor kind does not match the environment dimensionality",
            ));
        }
        self.filter.validate()?;
        self.thresholds.validate()?;
        self.vehicle.validate()?;
        if self.env.dimensionality == 2 && self.vehicle.mode == VehicleMode::Dynamic {
            return Err(Error::config(
                "the dynamic vehicle is 3D only; use kinematic mode in 2D",
            ));
        }
        self.planner_config()?.validate()?;
        self.targets.validate(&self.env)?;
        if !self.env.contains(&self.start()) {
            return Err(Error::config("start position lies outside the environment"));
        }
        for o in &self.obstacles.centers {
            if o.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("obstacle centers must be finite"));
            }
        }
        if !(self.obstacles.collision_radius >= 0.0 && self.obstacles.collision_radius < self.vehicle.gains.d_l) {
            return Err(Error::config("collision_radius must be non-negative and below d_l"));
        }
        if self.exploration_spacing.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::config("exploration_spacing must be positive"));
        }
        if !(self.lawnmower.spacing_xy > 0.0 && self.lawnmower.layer_dz > 0.0) {
            return Err(Error::config("lawnmower spacings must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must not be empty"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be positive"));
        }
        if let Some(p) = self.rmse_penalty {
            if !(p > 0.0) {
                return Err(Error::config("rmse_penalty must be positive"));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> Vec3 {
        self.start.map(Vector3::from).unwrap_or_else(|| self.env.lower())
    }

    pub fn rmse_penalty(&self) -> f64 {
        self.rmse_penalty.unwrap_or(3.0 * self.thresholds.t_r)
    }

    fn peak_detection(&self) -> f64 {
        match &self.sensor {
            SensorModel::Omni(c) => c.g,
            SensorModel::Box2d(_) => 1.0,
        }
    }

    /// Resolved planner configuration; refinement-only forces `α = 0`.
    pub fn planner_config(&self) -> Result<PlannerConfig> {
        let alpha = match self.algorithm {
            Algorithm::RefinementOnly => 0.0,
            _ => self
                .planner
                .alpha
                .unwrap_or_else(|| ObjectiveConfig::default_alpha(self.thresholds.t_m, self.peak_detection())),
        };
        Ok(PlannerConfig {
            tau: self.planner.tau,
            objective: ObjectiveConfig {
                alpha,
                mode: self.planner.mode,
            },
            moveset: self
                .planner
                .moveset
                .clone()
                .unwrap_or_else(|| MoveSet::default_for(self.env.dimensionality)),
        })
    }

    pub fn context(&self) -> Result<SearchContext> {
        Ok(SearchContext {
            env: self.env.clone(),
            sensor: self.sensor.clone(),
            filter: self.filter.clone(),
            thresholds: self.thresholds.clone(),
            planner: self.planner_config()?,
            vehicle: self.vehicle.clone(),
            obstacles: self.obstacles.clone(),
        })
    }

    pub fn truth(&self, seed: u64) -> Result<TargetSet> {
        self.targets
            .generate(&self.env, &mut RandomSource::new(seed, TRUTH_STREAM))
    }

    /// Returns a copy with one parameter replaced. `param` is either a
    /// dotted path (`planner.tau`) or a key that occurs exactly once
    /// anywhere in the document (`T_r`). `value` is parsed as JSON, falling
    /// back to a plain string.
    pub fn with_override(&self, param: &str, value: &str) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let parsed: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let path: Vec<String> = if param.contains('.') {
            param.split('.').map(str::to_string).collect()
        } else {
            let mut hits = Vec::new();
            find_key(&doc, param, &mut Vec::new(), &mut hits);
            match hits.len() {
                1 => hits.pop().unwrap(),
                0 => return Err(Error::config(format!("unknown parameter `{param}`"))),
                _ => {
                    return Err(Error::config(format!(
                        "parameter `{param}` is ambiguous; use a dotted path"
                    )))
                }
            }
        };
        set_path(&mut doc, &path, parsed)?;
        let spec: ExperimentSpec = serde_json::from_value(doc).map_err(|e| Error::config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn find_key(v: &Value, key: &str, prefix: &mut Vec<String>, hits: &mut Vec<Vec<String>>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            prefix.push(k.clone());
            if k == key {
                hits.push(prefix.clone());
            }
            find_key(child, key, prefix, hits);
            prefix.pop();
        }
    }
}

fn set_path(doc: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut cur = doc;
    for (i, part) in path.iter().enumerate() {
        let last = i + 1 == path.len();
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("`{}` is not an object", path[..i].join("."))))?;
        if last {
            // Optional sections serialise as null; allow filling them.
            obj.insert(part.clone(), value);
            return Ok(());
        }
        let next = obj
            .get_mut(part)
            .ok_or_else(|| Error::config(format!("unknown parameter `{}`", path[..=i].join("."))))?;
        if next.is_null() {
            *next = Value::Object(Default::default());
        }
        cur = next;
    }
    Ok(())
}

/// JSON schema of the config file.
pub fn config_schema() -> Value {
    serde_json::to_value(schemars::schema_for!(ExperimentSpec)).expect("schema serialises")
}
