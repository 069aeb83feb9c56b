//! Fixed-wing point-mass model, backstepping waypoint tracking with a
//! heading-channel obstacle avoidance term, and fixed-step integration
//! between planner steps.
//!
//! Position is NED (z points down). The attitude vector is
//! `[airspeed, heading, pitch, roll]`. Only the first three attitude
//! channels are actuated: the control is `[u_Va, u_β, u_γ]` and roll
//! evolves open loop.

use nalgebra::{Matrix3, Matrix3x4, Matrix4x3, SVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Largest condition number of the input matrix accepted by the controller.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub q: Vec3,
    pub airspeed: f64,
    pub heading: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl UavState {
    pub fn attitude(&self) -> Vector4<f64> {
        Vector4::new(self.airspeed, self.heading, self.pitch, self.roll)
    }

    fn to_vector(self) -> SVector<f64, 7> {
        SVector::<f64, 7>::from_column_slice(&[
            self.q.x,
            self.q.y,
            self.q.z,
            self.airspeed,
            self.heading,
            self.pitch,
            self.roll,
        ])
    }

    fn from_vector(v: &SVector<f64, 7>) -> Self {
        UavState {
            q: Vector3::new(v[0], v[1], v[2]),
            airspeed: v[3],
            heading: v[4],
            pitch: v[5],
            roll: v[6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct UavParams {
    /// Mass (kg).
    pub m: f64,
    /// Gravity (m/s²).
    pub g: f64,
    /// Drag force (N).
    #[serde(rename = "D")]
    pub drag: f64,
    /// Aerodynamic lift (N).
    #[serde(rename = "L")]
    pub lift: f64,
    /// Wind, NED (m/s).
    pub wind: [f64; 3],
}

impl Default for UavParams {
    fn default() -> Self {
        UavParams {
            m: 10.0,
            g: 9.8,
            drag: 0.9,
            lift: 0.7,
            wind: [3.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ControlGains {
    #[serde(rename = "K_g1")]
    pub k_g1: f64,
    #[serde(rename = "K_g2")]
    pub k_g2: f64,
    #[serde(rename = "K_g3")]
    pub k_g3: f64,
    pub k_obs: f64,
    /// Obstacle danger distance (m).
    pub d_l: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        ControlGains {
            k_g1: 9.0,
            k_g2: 9.0,
            k_g3: 9.0,
            k_obs: 5.0,
            d_l: 6.0,
        }
    }
}

/// Known point obstacles. `collision_radius` is only used to audit
/// trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSet {
    pub centers: Vec<[f64; 3]>,
    pub collision_radius: f64,
}

impl Default for ObstacleSet {
    fn default() -> Self {
        ObstacleSet {
            centers: Vec::new(),
            collision_radius: 2.0,
        }
    }
}

impl ObstacleSet {
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn nearest_distance(&self, q: &Vec3) -> f64 {
        self.centers
            .iter()
            .map(|o| (q - Vector3::from(*o)).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum VehicleMode {
    /// The vehicle jumps to each commanded waypoint.
    Kinematic,
    /// Closed-loop nonlinear model integrated between waypoints.
    Dynamic,
}

/// Initial airspeed and angles of the dynamic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct InitialAttitude {
    pub airspeed: f64,
    pub heading: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Default for InitialAttitude {
    fn default() -> Self {
        InitialAttitude {
            airspeed: 15.0,
            heading: std::f64::consts::FRAC_PI_4,
            pitch: 0.0,
            roll: 0.0,
        }
    }
}

/// What a search does when the closed loop hits a singular state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SingularityPolicy {
    /// Stop the run with an error.
    Abort,
    /// Re-initialise airspeed and angles at the achieved position and fly
    /// on. Each reset is counted in the step log.
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    pub mode: VehicleMode,
    pub params: UavParams,
    pub gains: ControlGains,
    pub initial: InitialAttitude,
    /// Integration step (s).
    pub dt: f64,
    /// Time budget per waypoint (s).
    pub t_max: f64,
    /// Waypoint-reached radius (m).
    pub tolerance: f64,
    /// Literal east velocity `V_a sinβ sinγ`, which cannot move east in
    /// level flight. Off by default: `V_a sinβ cosγ`.
    pub as_printed: bool,
    pub on_singularity: SingularityPolicy,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        VehicleConfig {
            mode: VehicleMode::Dynamic,
            params: UavParams::default(),
            gains: ControlGains::default(),
            initial: InitialAttitude::default(),
            dt: 0.001,
            t_max: 10.0,
            tolerance: 0.5,
            as_printed: false,
            on_singularity: SingularityPolicy::Reset,
        }
    }
}

impl VehicleConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.m > 0.0 && p.g > 0.0) {
            return Err(Error::config("vehicle m and g must be positive"));
        }
        let k = &self.gains;
        if !(k.k_g1 > 0.0 && k.k_g2 > 0.0 && k.k_g3 > 0.0 && k.k_obs > 0.0 && k.d_l > 0.0) {
            return Err(Error::config("controller gains and d_l must be positive"));
        }
        if !(self.dt > 0.0 && self.t_max > 0.0 && self.tolerance >= 0.0) {
            return Err(Error::config("dt and t_max must be positive, tolerance non-negative"));
        }
        if !(self.initial.airspeed > 0.0) {
            return Err(Error::config("initial airspeed must be positive"));
        }
        Ok(())
    }

    pub fn initial_state(&self, q: Vec3) -> UavState {
        UavState {
            q,
            airspeed: self.initial.airspeed,
            heading: self.initial.heading,
            pitch: self.initial.pitch,
            roll: self.initial.roll,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDeriv {
    pub q_dot: Vec3,
    pub attitude_dot: Vector4<f64>,
}

fn check_regime(s: &UavState) -> Result<()> {
    if !(s.airspeed > 1e-6) || !s.airspeed.is_finite() {
        return Err(Error::Singularity(format!("airspeed {} not positive", s.airspeed)));
    }
    if s.pitch.cos().abs() < 1e-9 {
        return Err(Error::Singularity("pitch at ±π/2".into()));
    }
    if ![s.heading, s.pitch, s.roll].iter().all(|a| a.is_finite()) || !s.q.iter().all(|v| v.is_finite()) {
        return Err(Error::Singularity("non-finite state".into()));
    }
    Ok(())
}

/// Airspeed-induced velocity, without wind.
fn air_velocity(s: &UavState, as_printed: bool) -> Vec3 {
    let (sb, cb) = s.heading.sin_cos();
    let (sg, cg) = s.pitch.sin_cos();
    let east = if as_printed { sb * sg } else { sb * cg };
    s.airspeed * Vector3::new(cb * cg, east, -sg)
}

/// ∂y/∂(V_a, β, γ, φ).
#[rustfmt::skip]
fn velocity_jacobian(s: &UavState, as_printed: bool) -> Matrix3x4<f64> {
    let va = s.airspeed;
    let (sb, cb) = s.heading.sin_cos();
    let (sg, cg) = s.pitch.sin_cos();
    if as_printed {
        Matrix3x4::new(
            cb * cg, -va * sb * cg, -va * cb * sg, 0.0,
            sb * sg, va * cb * sg, va * sb * cg, 0.0,
            -sg, 0.0, -va * cg, 0.0,
        )
    } else {
        Matrix3x4::new(
            cb * cg, -va * sb * cg, -va * cb * sg, 0.0,
            sb * cg, va * cb * cg, -va * sb * sg, 0.0,
            -sg, 0.0, -va * cg, 0.0,
        )
    }
}

fn drift(s: &UavState, p: &UavParams) -> Vector4<f64> {
    Vector4::new(
        -p.drag / p.m - p.g * s.pitch.sin(),
        -p.g / s.airspeed * s.pitch.cos(),
        0.0,
        s.roll.sin(),
    )
}

#[rustfmt::skip]
fn input_matrix(s: &UavState, p: &UavParams) -> Matrix4x3<f64> {
    let va = s.airspeed;
    Matrix4x3::new(
        1.0 / p.m, 0.0, 0.0,
        0.0, p.g / va * s.roll.cos(), 0.0,
        0.0, 0.0, p.lift / (p.m * va * s.pitch.cos()),
        0.0, 0.0, 0.0,
    )
}

/// `q̇ = y(ϑ) + w`, `ϑ̇ = f(ϑ) + 𝕘(ϑ) u`.
pub fn dynamics_deriv(s: &UavState, u: &Vec3, p: &UavParams, as_printed: bool) -> Result<StateDeriv> {
    check_regime(s)?;
    Ok(StateDeriv {
        q_dot: air_velocity(s, as_printed) + Vector3::from(p.wind),
        attitude_dot: drift(s, p) + input_matrix(s, p) * u,
    })
}

/// Feedback-linearising backstepping law
/// `u = (J𝕘)⁻¹(−J f − (K1+K2+K3) q̇ − (1 + K1K2K3)(q − q_d))`
/// with `J = ∂y/∂ϑ`.
pub fn backstep_control(
    s: &UavState,
    q_d: &Vec3,
    gains: &ControlGains,
    p: &UavParams,
    as_printed: bool,
) -> Result<Vec3> {
    check_regime(s)?;
    let jac = velocity_jacobian(s, as_printed);
    let a: Matrix3<f64> = jac * input_matrix(s, p);
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(Error::Singularity(format!(
            "input matrix ill-conditioned (σ_min = {smin:e}); invalid flight regime"
        )));
    }
    let q_dot = air_velocity(s, as_printed) + Vector3::from(p.wind);
    let damping = gains.k_g1 + gains.k_g2 + gains.k_g3;
    let stiffness = 1.0 + gains.k_g1 * gains.k_g2 * gains.k_g3;
    let rhs = -(jac * drift(s, p)) - damping * q_dot - stiffness * (s.q - q_d);
    a.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singularity("input matrix not invertible".into()))
}

/// 1 when the nearest obstacle is strictly closer than `d_l`, else 0.
pub fn obstacle_indicator(q: &Vec3, obs: &ObstacleSet, d_l: f64) -> f64 {
    if obs.nearest_distance(q) < d_l {
        1.0
    } else {
        0.0
    }
}

/// `ũ_β = u_β − k_obs · O`; other channels pass through.
pub fn apply_avoidance(u: &Vec3, indicator: f64, k_obs: f64) -> Vec3 {
    Vector3::new(u.x, u.y - k_obs * indicator, u.z)
}

/// Returns the commanded waypoint.
pub fn kinematic_move(_q: &Vec3, q_d: &Vec3) -> Vec3 {
    *q_d
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub state: UavState,
    /// Positions after every integration step.
    pub trajectory: Vec<Vec3>,
    pub reached: bool,
    /// Simulated time spent (s).
    pub elapsed: f64,
}

/// Integration stopped on a singular state; carries what was flown.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackAbort {
    pub reason: String,
    pub partial: TrackOutcome,
}

impl From<TrackAbort> for Error {
    fn from(a: TrackAbort) -> Self {
        Error::Singularity(a.reason)
    }
}

fn closed_loop(x: &SVector<f64, 7>, q_d: &Vec3, cfg: &VehicleConfig, obs: &ObstacleSet) -> Result<SVector<f64, 7>> {
    let s = UavState::from_vector(x);
    let mut u = backstep_control(&s, q_d, &cfg.gains, &cfg.params, cfg.as_printed)?;
    if !obs.is_empty() {
        let o = obstacle_indicator(&s.q, obs, cfg.gains.d_l);
        u = apply_avoidance(&u, o, cfg.gains.k_obs);
    }
    let d = dynamics_deriv(&s, &u, &cfg.params, cfg.as_printed)?;
    let mut out = SVector::<f64, 7>::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&d.q_dot);
    out.fixed_rows_mut::<4>(3).copy_from(&d.attitude_dot);
    Ok(out)
}

/// Flies toward `q_d` under the closed-loop controller with classical RK4
/// at step `cfg.dt` until within `cfg.tolerance` or `cfg.t_max` elapses.
pub fn track_to(
    s: &UavState,
    q_d: &Vec3,
    cfg: &VehicleConfig,
    obs: &ObstacleSet,
) -> std::result::Result<TrackOutcome, TrackAbort> {
    let mut x = s.to_vector();
    let mut out = TrackOutcome {
        state: *s,
        trajectory: Vec::new(),
        reached: false,
        elapsed: 0.0,
    };
    let steps = (cfg.t_max / cfg.dt).ceil() as usize;
    let h = cfg.dt;
    for _ in 0..=steps {
        if (out.state.q - q_d).norm() < cfg.tolerance || out.state.q == *q_d {
            out.reached = true;
            return Ok(out);
        }
        if out.elapsed >= cfg.t_max - 1e-12 {
            break;
        }
        let rk = (|| -> Result<SVector<f64, 7>> {
            let k1 = closed_loop(&x, q_d, cfg, obs)?;
            let k2 = closed_loop(&(x + k1 * (h / 2.0)), q_d, cfg, obs)?;
            let k3 = closed_loop(&(x + k2 * (h / 2.0)), q_d, cfg, obs)?;
            let k4 = closed_loop(&(x + k3 * h), q_d, cfg, obs)?;
            Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
        })();
        match rk {
            Ok(next) => {
                x = next;
                out.state = UavState::from_vector(&x);
                out.trajectory.push(out.state.q);
                out.elapsed += h;
            }
            Err(e) => {
                return Err(TrackAbort {
                    reason: e.to_string(),
                    partial: out,
                })
            }
        }
    }
    Ok(out)
}
