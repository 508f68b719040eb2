//! Finite metric measure spaces.
//!
//! A space is a finite point set with a metric and a positive weight per
//! point (the measure μ). Balls are closed: `B(x, r) = {y : d(x, y) ≤ r}`.

mod generate;
mod stats;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::{Error, Result};

pub use generate::{generate_space, Similitude, SpaceSpec};
pub use stats::{
    doubling_stats, lebesgue_density_profile, DoublingRow, DoublingStats, LebesgueRow,
};

/// Above this many points distances are computed on demand instead of being
/// stored as a dense matrix.
pub const DENSE_LIMIT: usize = 4000;

/// Relative slack allowed in the triangle inequality.
pub const TRIANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum DistanceStore {
    /// Row-major `n × n` matrix.
    Dense { n: usize, data: Vec<f64> },
    /// `d(x, y) = (scale · |p_x − p_y|)^exponent` over stored points.
    ///
    /// Grids keep integer lattice indices here with `scale` equal to the step,
    /// so that distances between lattice points are exact multiples of it.
    Ambient { points: Vec<Vec<f64>>, scale: f64, exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpaceWarning {
    /// Two first-level pieces of an iterated function system overlap at the
    /// generated depth.
    OverlappingPieces { first: usize, second: usize },
    /// Distinct address words produced the same point; their weights were merged.
    MergedCoincidentPoints { count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricMeasureSpace {
    ids: Vec<String>,
    store: DistanceStore,
    weights: Vec<f64>,
    coords: Option<Vec<Vec<f64>>>,
    warnings: Vec<SpaceWarning>,
}

impl FiniteMetricMeasureSpace {
    /// Builds a space from a full distance matrix, checking every metric axiom
    /// except the triangle inequality (see [`Self::triangle_audit`]).
    pub fn from_distance_matrix(ids: Vec<String>, matrix: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if matrix.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: matrix.len() });
        }
        let mut data = Vec::with_capacity(n * n);
        for row in &matrix {
            if row.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        let space = FiniteMetricMeasureSpace {
            ids,
            store: DistanceStore::Dense { n, data },
            weights,
            coords: None,
            warnings: Vec::new(),
        };
        space.validate()?;
        Ok(space)
    }

    /// Points of ℝⁿ with the Euclidean metric.
    pub fn from_points(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        let weights = weights.unwrap_or_else(|| vec![1.0 / n.max(1) as f64; n]);
        let space = Self::assemble(points.clone(), 1.0, points, weights)?;
        space.validate()?;
        Ok(space)
    }

    pub(crate) fn assemble(
        lattice: Vec<Vec<f64>>,
        scale: f64,
        coords: Vec<Vec<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = lattice.len();
        let ids = (0..n).map(|i| format!("{i}")).collect();
        let mut space = FiniteMetricMeasureSpace {
            ids,
            store: DistanceStore::Ambient { points: lattice, scale, exponent: 1.0 },
            weights,
            coords: Some(coords),
            warnings: Vec::new(),
        };
        space.densify_if_small();
        Ok(space)
    }

    fn densify_if_small(&mut self) {
        let n = self.len();
        if n > DENSE_LIMIT || matches!(self.store, DistanceStore::Dense { .. }) {
            return;
        }
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = self.dist(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        self.store = DistanceStore::Dense { n, data };
    }

    /// Checks identity, symmetry, positivity and the weights.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::invalid("a space needs at least one point"));
        }
        if self.weights.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: self.weights.len() });
        }
        if let Some(i) = self.weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid(format!("weight of point {i} is not positive")));
        }
        if let Some(c) = &self.coords {
            if c.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: c.len() });
            }
        }
        if let DistanceStore::Dense { data, .. } = &self.store {
            for i in 0..n {
                if data[i * n + i] != 0.0 {
                    return Err(Error::MetricViolation(format!("d({i},{i}) ≠ 0")));
                }
                for j in i + 1..n {
                    let a = data[i * n + j];
                    let b = data[j * n + i];
                    if !a.is_finite() || a != b {
                        return Err(Error::MetricViolation(format!("d({i},{j}) is not symmetric")));
                    }
                    if a <= 0.0 {
                        return Err(Error::MetricViolation(format!("d({i},{j}) = {a} for distinct points")));
                    }
                }
            }
        } else {
            // On-demand distances: only positivity can fail (duplicate points).
            for i in 0..n.min(DENSE_LIMIT) {
                if (i + 1..n).any(|j| self.dist(i, j) <= 0.0) {
                    return Err(Error::MetricViolation(format!("point {i} is duplicated")));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn set_ids(&mut self, ids: Vec<String>) -> Result<()> {
        if ids.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: ids.len() });
        }
        self.ids = ids;
        Ok(())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn ambient_dim(&self) -> Option<usize> {
        self.coords.as_ref().and_then(|c| c.first()).map(|p| p.len())
    }

    pub fn store(&self) -> &DistanceStore {
        &self.store
    }

    pub fn warnings(&self) -> &[SpaceWarning] {
        &self.warnings
    }

    pub(crate) fn push_warning(&mut self, w: SpaceWarning) {
        self.warnings.push(w);
    }

    pub fn check_point(&self, x: usize) -> Result<()> {
        if x >= self.len() {
            Err(Error::UnknownPoint(x))
        } else {
            Ok(())
        }
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        match &self.store {
            DistanceStore::Dense { n, data } => data[i * n + j],
            DistanceStore::Ambient { points, scale, exponent } => {
                let d = scale * math::dist(&points[i], &points[j]);
                if *exponent == 1.0 {
                    d
                } else {
                    math::powf(d, *exponent)
                }
            }
        }
    }

    pub fn distances_from(&self, x: usize) -> Vec<f64> {
        (0..self.len()).map(|y| self.dist(x, y)).collect()
    }

    /// Same space with every weight multiplied by `c > 0`.
    pub fn with_scaled_weights(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::invalid("weight scale must be positive"));
        }
        let mut s = self.clone();
        for w in &mut s.weights {
            *w *= c;
        }
        Ok(s)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        let mut s = self.clone();
        s.weights = weights;
        s.validate()?;
        Ok(s)
    }

    /// Snowflake transform `d ↦ d^s` for `s ∈ (0, 1]`.
    pub fn snowflake(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::invalid(format!("snowflake exponent {s} not in (0,1]")));
        }
        let mut out = self.clone();
        out.store = match &self.store {
            DistanceStore::Dense { n, data } => {
                DistanceStore::Dense { n: *n, data: data.iter().map(|&d| math::powf(d, s)).collect() }
            }
            DistanceStore::Ambient { points, scale, exponent } => DistanceStore::Ambient {
                points: points.clone(),
                scale: *scale,
                exponent: exponent * s,
            },
        };
        Ok(out)
    }

    /// Closed ball `{y : d(x, y) ≤ r}`, in index order.
    pub fn ball(&self, x: usize, r: f64) -> Result<Vec<usize>> {
        self.check_point(x)?;
        if !(r >= 0.0) {
            return Err(Error::invalid(format!("ball radius {r} must be non-negative")));
        }
        Ok((0..self.len()).filter(|&y| self.dist(x, y) <= r).collect())
    }

    pub fn ball_mass(&self, x: usize, r: f64) -> Result<f64> {
        Ok(self.ball(x, r)?.iter().map(|&y| self.weights[y]).sum())
    }

    pub fn nearest_neighbor_distance(&self, x: usize) -> f64 {
        (0..self.len())
            .filter(|&y| y != x)
            .map(|y| self.dist(x, y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest distance between distinct points (`∞` for a single point).
    pub fn min_distance(&self) -> f64 {
        let n = self.len();
        let mut m = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                m = m.min(self.dist(i, j));
            }
        }
        m
    }

    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                m = m.max(self.dist(i, j));
            }
        }
        m
    }

    /// Triangle-inequality audit: exhaustive over all triples up to 2000
    /// points, otherwise 10⁶ seeded random triples.
    pub fn triangle_audit(&self, seed: u64) -> TriangleAudit {
        const EXHAUSTIVE_LIMIT: usize = 2000;
        const SAMPLES: u64 = 1_000_000;
        let n = self.len();
        let mut audit = TriangleAudit { checked: 0, sampled: n > EXHAUSTIVE_LIMIT, worst_excess: 0.0, violation: None };
        let check = |x: usize, y: usize, z: usize, audit: &mut TriangleAudit| {
            let lhs = self.dist(x, z);
            let rhs = self.dist(x, y) + self.dist(y, z);
            let excess = (lhs - rhs) / rhs.max(f64::MIN_POSITIVE);
            audit.checked += 1;
            if excess > audit.worst_excess {
                audit.worst_excess = excess;
                if excess > TRIANGLE_TOL {
                    audit.violation = Some((x, y, z));
                }
            }
        };
        if !audit.sampled {
            for x in 0..n {
                for z in x + 1..n {
                    for y in 0..n {
                        if y != x && y != z {
                            check(x, y, z, &mut audit);
                        }
                    }
                }
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..SAMPLES {
                let x = rng.gen_range(0..n);
                let y = rng.gen_range(0..n);
                let z = rng.gen_range(0..n);
                if x != y && y != z && x != z {
                    check(x, y, z, &mut audit);
                }
            }
        }
        audit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleAudit {
    pub checked: u64,
    pub sampled: bool,
    /// Largest relative excess `(d(x,z) − d(x,y) − d(y,z)) / (d(x,y) + d(y,z))`.
    pub worst_excess: f64,
    pub violation: Option<(usize, usize, usize)>,
}

impl TriangleAudit {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Per-point neighbor lists sorted by distance, with prefix masses, for
/// repeated ball queries at many radii.
#[derive(Debug, Clone)]
pub struct BallIndex {
    neighbors: Vec<Vec<(f64, usize)>>,
    prefix_mass: Vec<Vec<f64>>,
}

impl BallIndex {
    pub fn build(space: &FiniteMetricMeasureSpace) -> Self {
        let n = space.len();
        let mut neighbors = Vec::with_capacity(n);
        let mut prefix_mass = Vec::with_capacity(n);
        for x in 0..n {
            let (list, mass) = sorted_neighbors(space, x);
            neighbors.push(list);
            prefix_mass.push(mass);
        }
        BallIndex { neighbors, prefix_mass }
    }

    /// All points sorted by distance from `x` (ties by index).
    pub fn neighbors(&self, x: usize) -> &[(f64, usize)] {
        &self.neighbors[x]
    }

    pub fn ball(&self, x: usize, r: f64) -> impl Iterator<Item = usize> + '_ {
        let list = &self.neighbors[x];
        let k = list.partition_point(|&(d, _)| d <= r);
        list[..k].iter().map(|&(_, y)| y)
    }

    pub fn ball_mass(&self, x: usize, r: f64) -> f64 {
        let k = self.neighbors[x].partition_point(|&(d, _)| d <= r);
        self.prefix_mass[x][k]
    }
}

/// Neighbors of `x` sorted by `(distance, index)` and the prefix sums of their
/// weights (`prefix[k]` is the mass of the first `k` entries).
pub(crate) fn sorted_neighbors(space: &FiniteMetricMeasureSpace, x: usize) -> (Vec<(f64, usize)>, Vec<f64>) {
    let mut list: Vec<(f64, usize)> = (0..space.len()).map(|y| (space.dist(x, y), y)).collect();
    list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut mass = Vec::with_capacity(list.len() + 1);
    let mut acc = 0.0;
    mass.push(0.0);
    for &(_, y) in &list {
        acc += space.weight(y);
        mass.push(acc);
    }
    (list, mass)
}

/// Draws `n` points uniformly from `[0, 1)^dim`.
pub(crate) fn random_unit_points(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect()
}
