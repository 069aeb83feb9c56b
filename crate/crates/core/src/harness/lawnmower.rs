//! Boustrophedon coverage baseline.

use nalgebra::Vector3;

use crate::env::Environment;
use crate::Vec3;

/// Offsets `0, s, 2s, …` not exceeding `extent` (with a little slack for
/// rounding).
fn ticks(extent: f64, spacing: f64) -> Vec<f64> {
    let n = ((extent + 1e-9 * spacing) / spacing).floor() as usize;
    (0..=n).map(|i| i as f64 * spacing).collect()
}

/// Corner waypoints of a lawnmower sweep. Rows run along x and are spaced
/// `spacing_xy` apart in y; layers are `layer_dz` apart in z and reverse
/// the row order, so consecutive waypoints differ along a single axis. A
/// planar environment yields one layer.
pub fn lawnmower_waypoints(env: &Environment, spacing_xy: f64, layer_dz: f64) -> Vec<Vec3> {
    let lo = env.lower();
    let hi = env.upper();
    let rows = ticks(hi.y - lo.y, spacing_xy);
    let layers = if env.is_active(2) {
        ticks(hi.z - lo.z, layer_dz)
    } else {
        vec![0.0]
    };
    let mut out = Vec::with_capacity(2 * rows.len() * layers.len());
    let mut forward = true;
    for (l, dz) in layers.iter().enumerate() {
        let z = lo.z + dz;
        let ys: Vec<f64> = if l % 2 == 0 {
            rows.iter().map(|dy| lo.y + dy).collect()
        } else {
            rows.iter().rev().map(|dy| lo.y + dy).collect()
        };
        for y in ys {
            let (a, b) = if forward { (lo.x, hi.x) } else { (hi.x, lo.x) };
            out.push(Vector3::new(a, y, z));
            out.push(Vector3::new(b, y, z));
            forward = !forward;
        }
    }
    out
}

/// Splits the polyline into pieces no longer than `step`, keeping every
/// corner. The first point is `path[0]`.
pub fn densify(path: &[Vec3], step: f64) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::new();
    let Some(first) = path.first() else {
        return out;
    };
    out.push(*first);
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b - a).norm();
        if len == 0.0 {
            continue;
        }
        let n = (len / step - 1e-9).ceil().max(1.0) as usize;
        let dir = (b - a) / len;
        for i in 1..n {
            out.push(a + dir * (step * i as f64));
        }
        out.push(b);
    }
    out
}

/// Sequence of commanded waypoints for `steps` steps starting at `start`:
/// the densified sweep (after `start` if the sweep begins there), replayed
/// back and forth once exhausted.
pub fn lawnmower_schedule(
    env: &Environment,
    spacing_xy: f64,
    layer_dz: f64,
    step: f64,
    start: &Vec3,
    steps: usize,
) -> Vec<Vec3> {
    let mut path = densify(&lawnmower_waypoints(env, spacing_xy, layer_dz), step);
    if path.first() != Some(start) {
        let lead = densify(&[*start, path[0]], step);
        path = lead.into_iter().chain(path.into_iter().skip(1)).collect();
    }
    let mut out = Vec::with_capacity(steps);
    if path.len() < 2 {
        out.resize(steps, *start);
        return out;
    }
    let mut i = 0usize;
    let mut dir: isize = 1;
    while out.len() < steps {
        let next = i as isize + dir;
        if next < 0 || next as usize >= path.len() {
            dir = -dir;
            continue;
        }
        i = next as usize;
        out.push(path[i]);
    }
    out
}
