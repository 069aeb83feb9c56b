//! Bounded search space, node grids with multilinear interpolation and the
//! seeded random streams shared by every stochastic component.

use nalgebra::Vector3;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Axis-aligned box the vehicle and the targets live in.
///
/// In 2D mode the third axis is degenerate (`lower.z == upper.z`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub dimensionality: u8,
}

impl Environment {
    pub fn new_3d(lower: [f64; 3], upper: [f64; 3]) -> Result<Self> {
        let env = Environment {
            lower,
            upper,
            dimensionality: 3,
        };
        env.validate()?;
        Ok(env)
    }

    /// Planar arena at height `z`.
    pub fn new_2d(lower: [f64; 2], upper: [f64; 2], z: f64) -> Result<Self> {
        let env = Environment {
            lower: [lower[0], lower[1], z],
            upper: [upper[0], upper[1], z],
            dimensionality: 2,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensionality != 2 && self.dimensionality != 3 {
            return Err(Error::config(format!(
                "environment dimensionality must be 2 or 3, got {}",
                self.dimensionality
            )));
        }
        for axis in 0..3 {
            let (lo, hi) = (self.lower[axis], self.upper[axis]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config("environment bounds must be finite"));
            }
            if self.is_active(axis) && lo >= hi {
                return Err(Error::config(format!(
                    "environment lower bound must be below upper bound on axis {axis}"
                )));
            }
        }
        if self.dimensionality == 2 && self.lower[2] != self.upper[2] {
            return Err(Error::config(
                "2D environment needs a degenerate third axis (lower z == upper z)",
            ));
        }
        Ok(())
    }

    pub fn is_active(&self, axis: usize) -> bool {
        axis < self.dimensionality as usize
    }

    pub fn lower(&self) -> Vec3 {
        Vector3::from(self.lower)
    }

    pub fn upper(&self) -> Vec3 {
        Vector3::from(self.upper)
    }

    pub fn center(&self) -> Vec3 {
        (self.lower() + self.upper()) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.upper() - self.lower()
    }

    /// Closed-box membership on the active axes.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..self.dimensionality as usize).all(|a| p[a] >= self.lower[a] && p[a] <= self.upper[a])
    }

    /// Projects `p` onto the box. Inactive axes are pinned to the plane.
    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vector3::from_fn(|a, _| p[a].clamp(self.lower[a], self.upper[a]))
    }
}

/// Scalar values on a regular lattice. Node `(i, j, l)` sits at
/// `origin + (i, j, l) ⊙ spacing`; storage is x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    origin: Vec3,
    spacing: Vec3,
    dims: [usize; 3],
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(origin: Vec3, spacing: Vec3, dims: [usize; 3], fill: f64) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::config("grid dims must be positive"));
        }
        for a in 0..3 {
            if dims[a] > 1 && !(spacing[a] > 0.0) {
                return Err(Error::config("grid spacing must be positive on active axes"));
            }
        }
        if !fill.is_finite() {
            return Err(Error::config("grid values must be finite"));
        }
        Ok(ScalarGrid {
            origin,
            spacing,
            dims,
            values: vec![fill; dims[0] * dims[1] * dims[2]],
        })
    }

    /// Grid spanning `env` exactly, with node spacing at most `max_spacing`
    /// on each active axis. The actual spacing is shrunk so that the last
    /// node lands on the upper bound.
    pub fn covering(env: &Environment, max_spacing: [f64; 3], fill: f64) -> Result<Self> {
        let extent = env.extent();
        let mut dims = [1usize; 3];
        let mut spacing = Vector3::repeat(1.0);
        for a in 0..3 {
            if !env.is_active(a) {
                continue;
            }
            if !(max_spacing[a] > 0.0) {
                return Err(Error::config("exploration grid spacing must be positive"));
            }
            let cells = (extent[a] / max_spacing[a] - 1e-9).ceil().max(1.0) as usize;
            dims[a] = cells + 1;
            spacing[a] = extent[a] / cells as f64;
        }
        ScalarGrid::new(env.lower(), spacing, dims, fill)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn index(&self, i: usize, j: usize, l: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * l)
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.values[self.index(i, j, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, l: usize, v: f64) {
        let idx = self.index(i, j, l);
        self.values[idx] = v;
    }

    pub fn node_position(&self, i: usize, j: usize, l: usize) -> Vec3 {
        self.origin + Vector3::new(i as f64, j as f64, l as f64).component_mul(&self.spacing)
    }

    /// Node positions in storage order.
    pub fn node_positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        let [nx, ny, nz] = self.dims;
        (0..nz).flat_map(move |l| (0..ny).flat_map(move |j| (0..nx).map(move |i| self.node_position(i, j, l))))
    }

    /// Multilinear interpolation over the 2^d surrounding nodes. Points
    /// outside the lattice are clamped onto it first.
    pub fn sample(&self, p: &Vec3) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.dims[a];
            if n == 1 {
                continue;
            }
            let t = ((p[a] - self.origin[a]) / self.spacing[a]).clamp(0.0, (n - 1) as f64);
            let cell = (t.floor() as usize).min(n - 2);
            base[a] = cell;
            frac[a] = t - cell as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8usize {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            let mut skip = false;
            for a in 0..3 {
                let hi = (corner >> a) & 1 == 1;
                if self.dims[a] == 1 {
                    if hi {
                        skip = true;
                        break;
                    }
                    idx[a] = 0;
                    continue;
                }
                idx[a] = base[a] + hi as usize;
                w *= if hi { frac[a] } else { 1.0 - frac[a] };
            }
            if skip || w == 0.0 {
                continue;
            }
            acc += w * self.get(idx[0], idx[1], idx[2]);
        }
        acc
    }
}

/// Seeded random stream. Equal `(seed, stream)` pairs give identical draw
/// sequences; different stream ids are independent ChaCha streams.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh source on another stream of the same master seed.
    pub fn sibling(&self, stream: u64) -> Self {
        RandomSource::new(self.seed, stream)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, RngCore};

    fn cube(lo: f64, hi: f64) -> Environment {
        Environment::new_3d([lo; 3], [hi; 3]).unwrap()
    }

    #[test]
    fn contains_closed_bounds() {
        let env = cube(0.0, 10.0);
        assert!(env.contains(&Vector3::new(5.0, 5.0, 5.0)));
        assert!(env.contains(&Vector3::new(0.0, 0.0, 0.0)));
        assert!(env.contains(&Vector3::new(10.0, 10.0, 10.0)));
        assert!(!env.contains(&Vector3::new(11.0, 5.0, 5.0)));
    }

    #[test]
    fn contains_ignores_degenerate_axis_in_2d() {
        let env = Environment::new_2d([0.0, 0.0], [2.0, 2.0], 1.0).unwrap();
        assert!(env.contains(&Vector3::new(1.0, 1.0, 1.0)));
        assert!(!env.contains(&Vector3::new(2.1, 1.0, 1.0)));
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(Environment::new_3d([0.0; 3], [10.0, -1.0, 10.0]).is_err());
        let mut env = cube(0.0, 1.0);
        env.dimensionality = 4;
        assert!(env.validate().is_err());
    }

    #[test]
    fn covering_grid_matches_default_resolution() {
        let env = cube(-20.0, 260.0);
        let grid = ScalarGrid::covering(&env, [10.0; 3], 1.0).unwrap();
        assert_eq!(grid.dims(), [29, 29, 29]);
        let last = grid.node_position(28, 28, 28);
        assert!((last - env.upper()).norm() < 1e-9);
    }

    fn unit_cell(values: [f64; 8]) -> ScalarGrid {
        let mut g = ScalarGrid::new(Vector3::zeros(), Vector3::repeat(1.0), [2, 2, 2], 0.0).unwrap();
        for (c, v) in values.iter().enumerate() {
            g.set(c & 1, (c >> 1) & 1, (c >> 2) & 1, *v);
        }
        g
    }

    // Independent corner-weight oracle: explicit trilinear weights per corner.
    fn naive_trilinear(values: [f64; 8], x: f64, y: f64, z: f64) -> f64 {
        let c = |i: usize, j: usize, k: usize| values[i + 2 * j + 4 * k];
        c(0, 0, 0) * (1.0 - x) * (1.0 - y) * (1.0 - z)
            + c(1, 0, 0) * x * (1.0 - y) * (1.0 - z)
            + c(0, 1, 0) * (1.0 - x) * y * (1.0 - z)
            + c(1, 1, 0) * x * y * (1.0 - z)
            + c(0, 0, 1) * (1.0 - x) * (1.0 - y) * z
            + c(1, 0, 1) * x * (1.0 - y) * z
            + c(0, 1, 1) * (1.0 - x) * y * z
            + c(1, 1, 1) * x * y * z
    }

    #[test]
    fn sample_exact_at_nodes() {
        let vals = [0.1, 0.7, 0.3, 0.9, 0.2, 0.5, 0.4, 0.8];
        let g = unit_cell(vals);
        for (c, v) in vals.iter().enumerate() {
            let p = Vector3::new((c & 1) as f64, ((c >> 1) & 1) as f64, ((c >> 2) & 1) as f64);
            assert_eq!(g.sample(&p), *v);
        }
    }

    #[test]
    fn sample_edge_midpoint() {
        let g = unit_cell([0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!((g.sample(&Vector3::new(0.5, 0.0, 0.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sample_matches_corner_weight_oracle() {
        let vals = [0.1, 0.7, 0.3, 0.9, 0.2, 0.5, 0.4, 0.8];
        let g = unit_cell(vals);
        let got = g.sample(&Vector3::new(0.25, 0.5, 0.75));
        let want = naive_trilinear(vals, 0.25, 0.5, 0.75);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn sample_clamps_outside() {
        let g = unit_cell([0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(g.sample(&Vector3::new(5.0, 0.0, 0.0)), 1.0);
        assert_eq!(g.sample(&Vector3::new(-5.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn bilinear_on_degenerate_axis() {
        let env = Environment::new_2d([0.0, 0.0], [1.0, 1.0], 1.0).unwrap();
        let mut g = ScalarGrid::covering(&env, [1.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(g.dims(), [2, 2, 1]);
        g.set(1, 1, 0, 4.0);
        assert!((g.sample(&Vector3::new(0.5, 0.5, 1.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_sources_give_equal_draws() {
        let mut a = RandomSource::new(42, 3);
        let mut b = RandomSource::new(42, 3);
        let mut c = RandomSource::new(42, 4);
        let xa: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..64).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert!(a.random::<f64>() < 1.0);
    }

    proptest! {
        #[test]
        fn sample_is_convex_combination(
            vals in prop::array::uniform8(-5.0f64..5.0),
            x in 0.0f64..1.0, y in 0.0f64..1.0, z in 0.0f64..1.0,
        ) {
            let g = unit_cell(vals);
            let s = g.sample(&Vector3::new(x, y, z));
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
        }

        #[test]
        fn contains_is_monotone_under_shrinking(
            p in prop::array::uniform3(-5.0f64..15.0),
            shrink in 0.0f64..4.0,
        ) {
            let big = cube(0.0, 10.0);
            let small = cube(shrink, 10.0 - shrink);
            let p = Vector3::from(p);
            if small.contains(&p) {
                prop_assert!(big.contains(&p));
            }
        }
    }
}
