//! Running an experiment: one independent search per seed, in parallel.

use rayon::prelude::*;

use super::config::{Algorithm, ExperimentSpec};
use super::lawnmower::lawnmower_schedule;
use super::metrics::{match_found, rmse_found, RunRecord};
use crate::error::Result;
use crate::planner::{search_step, SearchState, StepRngs, Waypoint};

/// Runs one seed to completion.
pub fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<RunRecord> {
    let ctx = spec.context()?;
    let truth = spec.truth(seed)?;
    let start = spec.start();
    let mut state = SearchState::new(&ctx, start, spec.exploration_spacing)?;
    let mut rngs = StepRngs::new(seed);
    let schedule = match spec.algorithm {
        Algorithm::Lawnmower => Some(lawnmower_schedule(
            &spec.env,
            spec.lawnmower.spacing_xy,
            spec.lawnmower.layer_dz,
            ctx.planner.moveset.step_length,
            &start,
            spec.max_steps,
        )),
        _ => None,
    };
    let n_true = truth.count();
    let mut steps_to_all_found = None;
    for k in 0..spec.max_steps {
        let wp = match &schedule {
            Some(s) => Waypoint::Given(s[k]),
            None => Waypoint::Planned,
        };
        search_step(&mut state, &truth, &ctx, &mut rngs, wp)?;
        if n_true > 0 && steps_to_all_found.is_none() && state.found.len() >= n_true {
            steps_to_all_found = Some(k + 1);
            if spec.stop_when_all_found {
                break;
            }
        }
    }
    let found = state.found.positions().to_vec();
    let penalty = spec.rmse_penalty();
    Ok(RunRecord {
        seed,
        matches: match_found(&found, &truth.positions, penalty),
        rmse: rmse_found(&found, &truth.positions, penalty),
        truth: truth.positions,
        found_steps: state.found.steps().to_vec(),
        found,
        steps_to_all_found,
        min_obstacle_distance: state.min_obstacle_distance,
        resets: state.records.iter().map(|r| r.resets).sum(),
        timeouts: state.records.iter().filter(|r| r.timed_out).count(),
        explored_fraction: state.field.fraction_below(0.5),
        max_steps: spec.max_steps,
        steps: state.records,
    })
}

/// One record per seed, in seed-list order. Validation happens before
/// any run starts.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    spec.seeds.par_iter().map(|&s| run_seed(spec, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Environment;
    use crate::harness::config::{LawnmowerSpec, TargetGenerator};
    use crate::vehicle::{VehicleConfig, VehicleMode};

    fn spec(algorithm: Algorithm, targets: TargetGenerator) -> ExperimentSpec {
        ExperimentSpec {
            name: "t".into(),
            env: Environment::new_3d([0.0; 3], [60.0; 3]).unwrap(),
            start: None,
            targets,
            obstacles: Default::default(),
            algorithm,
            sensor: Default::default(),
            filter: Default::default(),
            thresholds: Default::default(),
            planner: Default::default(),
            vehicle: VehicleConfig {
                mode: VehicleMode::Kinematic,
                ..Default::default()
            },
            exploration_spacing: [10.0; 3],
            lawnmower: LawnmowerSpec {
                spacing_xy: 20.0,
                layer_dz: 20.0,
            },
            seeds: vec![1, 2],
            max_steps: 40,
            stop_when_all_found: true,
            rmse_penalty: None,
        }
    }

    #[test]
    fn lawnmower_without_targets_follows_the_schedule() {
        let s = spec(Algorithm::Lawnmower, TargetGenerator::None);
        let rec = run_seed(&s, 3).unwrap();
        let want = lawnmower_schedule(&s.env, 20.0, 20.0, 12.0, &s.start(), 40);
        assert_eq!(rec.steps.iter().map(|r| r.q).collect::<Vec<_>>(), want);
    }

    #[test]
    fn reruns_are_identical() {
        let s = spec(
            Algorithm::Proposed,
            TargetGenerator::Uniform {
                count: 2,
                margin: 10.0,
                min_separation: 8.0,
            },
        );
        let a = run_experiment(&s).unwrap();
        let b = run_experiment(&s).unwrap();
        assert_eq!(a.len(), 2);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.found, y.found);
            let strip = |r: &RunRecord| {
                r.steps
                    .iter()
                    .map(|s| (s.q, s.n_hat.to_bits(), s.n_found, s.n_meas))
                    .collect::<Vec<_>>()
            };
            assert_eq!(strip(x), strip(y));
        }
    }
}
