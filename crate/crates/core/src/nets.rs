//! ε-nets and piecewise-distance approximations.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::field::ScalarField;
use crate::lipschitz::{global_lip, inf_convolution};
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetStrategy {
    /// Scan points in index order starting at `seed mod n`, keep a point if it
    /// is at least ε from everything kept so far.
    GreedyScan,
    /// Start at `seed mod n` and repeatedly add the point farthest from the net
    /// while that distance is at least ε.
    FarthestPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonNet {
    pub points: Vec<usize>,
    pub epsilon: f64,
    /// Minimum pairwise distance inside the net (∞ for a single point).
    pub separation: f64,
    /// `max_x min_{x' ∈ net} d(x, x')`.
    pub covering_radius: f64,
    /// `max(1, covering_radius / ε)`.
    pub constant: f64,
}

impl EpsilonNet {
    pub fn contains(&self, x: usize) -> bool {
        self.points.binary_search(&x).is_ok()
    }

    /// For every point, its nearest net point and the distance to it (ties go
    /// to the smaller index).
    pub fn nearest(&self, space: &FiniteMetricMeasureSpace) -> Vec<(usize, f64)> {
        (0..space.len())
            .map(|x| {
                let mut best = (self.points[0], f64::INFINITY);
                for &c in &self.points {
                    let d = space.dist(x, c);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best
            })
            .collect()
    }
}

pub fn build_net(space: &FiniteMetricMeasureSpace, epsilon: f64, strategy: NetStrategy, seed: u64) -> Result<EpsilonNet> {
    grow_net(space, &[], epsilon, strategy, seed)
}

/// Refines `net` to a finer scale `epsilon ≤ net.epsilon`, keeping all of its
/// points. The result is a superset of `net`.
pub fn refine_net(space: &FiniteMetricMeasureSpace, net: &EpsilonNet, epsilon: f64, strategy: NetStrategy, seed: u64) -> Result<EpsilonNet> {
    if epsilon > net.epsilon {
        return Err(Error::invalid("refinement scale must not exceed the current ε"));
    }
    for &x in &net.points {
        space.check_point(x)?;
    }
    grow_net(space, &net.points, epsilon, strategy, seed)
}

fn grow_net(space: &FiniteMetricMeasureSpace, initial: &[usize], epsilon: f64, strategy: NetStrategy, seed: u64) -> Result<EpsilonNet> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid("ε must be positive and finite"));
    }
    let n = space.len();
    if n == 0 {
        return Err(Error::EmptySubset);
    }
    let start = (seed % n as u64) as usize;
    // Distance from each point to the current net.
    let mut gap = vec![f64::INFINITY; n];
    let mut points = Vec::new();
    let add = |c: usize, gap: &mut [f64], points: &mut Vec<usize>| {
        points.push(c);
        for (y, g) in gap.iter_mut().enumerate() {
            let d = space.dist(c, y);
            if d < *g {
                *g = d;
            }
        }
    };
    for &c in initial {
        add(c, &mut gap, &mut points);
    }
    match strategy {
        NetStrategy::GreedyScan => {
            for k in 0..n {
                let x = (start + k) % n;
                if gap[x] >= epsilon {
                    add(x, &mut gap, &mut points);
                }
            }
        }
        NetStrategy::FarthestPoint => {
            if initial.is_empty() {
                add(start, &mut gap, &mut points);
            }
            loop {
                let (far, d) = gap.iter().enumerate().fold((0, -1.0), |b, (i, &g)| if g > b.1 { (i, g) } else { b });
                if d < epsilon {
                    break;
                }
                add(far, &mut gap, &mut points);
            }
        }
    }
    let covering_radius = gap.iter().copied().fold(0.0, f64::max);
    points.sort_unstable();
    let mut separation = f64::INFINITY;
    for (a, &i) in points.iter().enumerate() {
        for &j in &points[a + 1..] {
            separation = separation.min(space.dist(i, j));
        }
    }
    Ok(EpsilonNet { points, epsilon, separation, covering_radius, constant: (covering_radius / epsilon).max(1.0) })
}

/// `[u]_ε(x) = min_{x' ∈ net} u(x') + L(u) d(x, x')`, equal to `u` on the net.
pub fn piecewise_distance_approx(space: &FiniteMetricMeasureSpace, u: &ScalarField, net: &EpsilonNet) -> Result<ScalarField> {
    u.check_len(space)?;
    if net.points.is_empty() {
        return Err(Error::EmptySubset);
    }
    for &x in &net.points {
        space.check_point(x)?;
    }
    let lip = global_lip(space, u)?;
    let approx = inf_convolution(space, u.values(), &net.points, lip);
    let cov = (0..space.len())
        .map(|x| net.points.iter().map(|&c| space.dist(x, c)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let slack = 2.0 * lip * cov;
    // In exact arithmetic u ≤ [u]_ε ≤ u + 2 L(u) cov; the clamps only absorb
    // rounding so both bounds hold on the computed values.
    Ok(approx.zip_with(u, |a, v| a.max(v).min(v + slack)))
}
