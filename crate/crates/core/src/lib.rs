//! Multi-target search with a sequential Monte Carlo PHD filter.
//!
//! A single vehicle searches a bounded 2D or 3D box for an unknown number of
//! static targets. Each step it clusters the filter's particles, promotes
//! tight, heavy clusters to found targets, senses, gates measurements that
//! belong to found targets, runs the filter, decays the exploration bonus
//! and picks the next waypoint by maximising exploration plus refinement
//! over a short receding horizon.

// Validation writes `!(x > 0.0)` on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod phd;
pub mod planner;
pub mod sensor;
pub mod targets;
pub mod vehicle;

pub use error::{Error, Result};

/// Positions and displacements, in metres.
pub type Vec3 = nalgebra::Vector3<f64>;
