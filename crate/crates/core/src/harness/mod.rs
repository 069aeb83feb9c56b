//! Experiment configuration, baselines, metrics and file output.

pub mod config;
pub mod lawnmower;
pub mod metrics;
pub mod output;
pub mod run;

pub use config::{Algorithm, ExperimentSpec, TargetGenerator};
pub use lawnmower::{densify, lawnmower_schedule, lawnmower_waypoints};
pub use metrics::{aggregate, mean_ci, rmse_found, MeanCi, Metrics, RunRecord};
pub use run::{run_experiment, run_seed};
