//! Run records, assignment-based localisation error and cross-seed
//! aggregation with Student-t intervals.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::planner::StepRecord;
use crate::Vec3;

/// Minimum-cost assignment of rows to distinct columns for a rectangular
/// cost matrix with `rows ≤ cols` (shortest augmenting paths with
/// potentials). Returns the column of every row.
pub fn assign_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs rows ≤ cols");
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// Truth index and distance matched to each found target, `None` when the
/// optimal assignment leaves it unmatched (penalised).
pub fn match_found(found: &[Vec3], truth: &[Vec3], penalty: f64) -> Vec<Option<(usize, f64)>> {
    let pen2 = penalty * penalty;
    let cols = truth.len().max(found.len());
    let cost: Vec<Vec<f64>> = found
        .iter()
        .map(|f| {
            (0..cols)
                .map(|j| match truth.get(j) {
                    Some(t) => (f - t).norm_squared().min(pen2),
                    None => pen2,
                })
                .collect()
        })
        .collect();
    assign_min_cost(&cost)
        .into_iter()
        .zip(found)
        .map(|(j, f)| {
            truth.get(j).and_then(|t| {
                let d = (f - t).norm();
                (d < penalty).then_some((j, d))
            })
        })
        .collect()
}

/// Root mean square over found targets of the distance to the assigned
/// truth; a found target left unmatched, or farther than `penalty`,
/// contributes `penalty`. `None` when nothing was found.
pub fn rmse_found(found: &[Vec3], truth: &[Vec3], penalty: f64) -> Option<f64> {
    if found.is_empty() {
        return None;
    }
    let m = match_found(found, truth, penalty);
    let sum: f64 = m.iter().map(|x| x.map_or(penalty * penalty, |(_, d)| d * d)).sum();
    Some((sum / found.len() as f64).sqrt())
}

/// Everything recorded for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub truth: Vec<Vec3>,
    pub steps: Vec<StepRecord>,
    pub found: Vec<Vec3>,
    pub found_steps: Vec<usize>,
    pub matches: Vec<Option<(usize, f64)>>,
    pub rmse: Option<f64>,
    /// Steps executed until every true target was found.
    pub steps_to_all_found: Option<usize>,
    pub min_obstacle_distance: f64,
    pub resets: usize,
    pub timeouts: usize,
    /// Fraction of exploration nodes with bonus below one half at the end.
    pub explored_fraction: f64,
    pub max_steps: usize,
}

impl RunRecord {
    /// Found-target count after each step, padded with the final count up
    /// to `len`.
    pub fn detections(&self, len: usize) -> Vec<f64> {
        let mut d: Vec<f64> = self.steps.iter().map(|r| r.n_found as f64).collect();
        let last = d.last().copied().unwrap_or(0.0);
        d.resize(len.max(d.len()), last);
        d
    }

    /// Steps to all-found, with unfinished runs censored at `max_steps + 1`.
    pub fn censored_steps(&self) -> f64 {
        self.steps_to_all_found
            .map_or(self.max_steps as f64 + 1.0, |s| s as f64)
    }

    pub fn mean_plan_seconds(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|r| r.plan_seconds).sum::<f64>() / self.steps.len() as f64
    }
}

/// Mean and 95% Student-t half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl MeanCi {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn overlaps(&self, other: &MeanCi) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

/// `t_{0.975, n−1} · s / √n`; the half-width is NaN for fewer than two
/// samples.
pub fn mean_ci(xs: &[f64]) -> MeanCi {
    let n = xs.len();
    let mean = if n == 0 {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / n as f64
    };
    if n < 2 {
        return MeanCi {
            mean,
            half_width: f64::NAN,
            n,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half_width = if var == 0.0 {
        0.0
    } else {
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        t * var.sqrt() / (n as f64).sqrt()
    };
    MeanCi { mean, half_width, n }
}

/// Cross-seed summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Per-step mean found count and interval.
    pub detections: Vec<MeanCi>,
    /// Over runs that found anything.
    pub rmse: MeanCi,
    /// Censored at `max_steps + 1` for unfinished runs.
    pub steps_to_all_found: MeanCi,
    pub finished: usize,
    pub plan_seconds: MeanCi,
    pub runs: usize,
}

pub fn aggregate(records: &[RunRecord]) -> Metrics {
    let len = records
        .iter()
        .map(|r| r.max_steps.max(r.steps.len()))
        .max()
        .unwrap_or(0);
    let curves: Vec<Vec<f64>> = records.iter().map(|r| r.detections(len)).collect();
    let detections = (0..len)
        .map(|k| mean_ci(&curves.iter().map(|c| c[k]).collect::<Vec<_>>()))
        .collect();
    let rmses: Vec<f64> = records.iter().filter_map(|r| r.rmse).collect();
    let steps: Vec<f64> = records.iter().map(RunRecord::censored_steps).collect();
    let plan: Vec<f64> = records.iter().map(RunRecord::mean_plan_seconds).collect();
    Metrics {
        detections,
        rmse: mean_ci(&rmses),
        steps_to_all_found: mean_ci(&steps),
        finished: records.iter().filter(|r| r.steps_to_all_found.is_some()).count(),
        plan_seconds: mean_ci(&plan),
        runs: records.len(),
    }
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::RandomSource;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for i in 0..=p.len() {
                let mut q = p.clone();
                q.insert(i, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn rmse_identity_and_single_pair() {
        let t = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(10.0, 0.0, 0.0)];
        assert_eq!(rmse_found(&t, &t, 3.3), Some(0.0));
        let f = vec![Vector3::new(1.0, 2.0, 3.0) + Vector3::new(0.3, 0.4, 0.0)];
        let r = rmse_found(&f, &t[..1], 3.3).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert_eq!(rmse_found(&[], &t, 3.3), None);
    }

    #[test]
    fn rmse_matches_permutation_oracle() {
        let mut rng = RandomSource::new(5, 0);
        let perms = permutations(4);
        assert_eq!(perms.len(), 24);
        for _ in 0..200 {
            let pts = |rng: &mut RandomSource| -> Vec<Vec3> {
                (0..4)
                    .map(|_| {
                        Vector3::new(
                            rng.random_range(0.0..6.0),
                            rng.random_range(0.0..6.0),
                            rng.random_range(0.0..6.0),
                        )
                    })
                    .collect()
            };
            let found = pts(&mut rng);
            let truth = pts(&mut rng);
            let pen = 3.3;
            let best = perms
                .iter()
                .map(|p| {
                    (0..4)
                        .map(|i| (found[i] - truth[p[i]]).norm_squared().min(pen * pen))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            let got = rmse_found(&found, &truth, pen).unwrap();
            assert!((got - (best / 4.0).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn surplus_found_targets_are_penalised() {
        let truth = vec![Vector3::zeros()];
        let found = vec![Vector3::new(0.1, 0.0, 0.0), Vector3::new(50.0, 0.0, 0.0)];
        let m = match_found(&found, &truth, 3.0);
        assert_eq!(m[0], Some((0, 0.1)));
        assert_eq!(m[1], None);
        let r = rmse_found(&found, &truth, 3.0).unwrap();
        assert!((r - ((0.01 + 9.0) / 2.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn t_interval_hand_check() {
        let ci = mean_ci(&[2.0, 4.0]);
        assert_eq!(ci.mean, 3.0);
        // s = √2, n = 2, t(0.975, 1) = 12.7062.
        assert!((ci.half_width - 12.706_204_736).abs() < 1e-6);
        let ci = mean_ci(&[5.0, 5.0, 5.0]);
        assert_eq!(ci.half_width, 0.0);
        let ci = mean_ci(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        // s = 1.5811, t(0.975, 4) = 2.7764.
        assert!((ci.half_width - 2.776_445 * 1.581_139 / 5f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn spearman_examples() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[2.0, 4.0, 9.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]) + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), 0.0);
    }

    fn record(seed: u64, counts: &[usize], max_steps: usize) -> RunRecord {
        let steps = counts
            .iter()
            .enumerate()
            .map(|(k, &n)| StepRecord {
                step: k,
                q: Vector3::zeros(),
                n_hat: 0.0,
                n_found: n,
                n_meas: 0,
                n_gated: 0,
                score_expl: 0.0,
                score_refine: 0.0,
                plan_seconds: 0.0,
                timed_out: false,
                resets: 0,
            })
            .collect();
        RunRecord {
            seed,
            truth: vec![],
            steps,
            found: vec![],
            found_steps: vec![],
            matches: vec![],
            rmse: None,
            steps_to_all_found: None,
            min_obstacle_distance: f64::INFINITY,
            resets: 0,
            timeouts: 0,
            explored_fraction: 0.0,
            max_steps,
        }
    }

    #[test]
    fn identical_records_have_zero_width() {
        let r = record(1, &[0, 1, 1, 2], 4);
        let m = aggregate(&[r.clone(), r.clone(), r]);
        assert!(m.detections.iter().all(|c| c.half_width == 0.0));
        assert_eq!(m.detections[3].mean, 2.0);
    }

    proptest! {
        #[test]
        fn aggregated_curves_non_decreasing(
            incs in proptest::collection::vec(proptest::collection::vec(0usize..2, 1..30), 2..6),
        ) {
            let recs: Vec<RunRecord> = incs
                .iter()
                .enumerate()
                .map(|(s, inc)| {
                    let counts: Vec<usize> = inc.iter().scan(0, |a, x| { *a += x; Some(*a) }).collect();
                    record(s as u64, &counts, 30)
                })
                .collect();
            let m = aggregate(&recs);
            prop_assert_eq!(m.detections.len(), 30);
            for w in m.detections.windows(2) {
                prop_assert!(w[1].mean >= w[0].mean - 1e-12);
            }
        }

        #[test]
        fn assignment_is_a_matching(n in 1usize..6, extra in 0usize..3, seed in 0u64..1000) {
            let mut rng = RandomSource::new(seed, 0);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n + extra).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
            let a = assign_min_cost(&cost);
            let mut seen = a.clone();
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), n);
        }
    }
}
