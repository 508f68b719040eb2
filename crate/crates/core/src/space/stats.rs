use alloc::vec::Vec;

use super::{sorted_neighbors, FiniteMetricMeasureSpace};
use crate::field::ScalarField;
use crate::{math, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DoublingRow {
    pub radius: f64,
    /// `max_x μ(B(x,2r)) / μ(B(x,r))`; 1 for excluded radii.
    pub kappa: f64,
    /// Center attaining the maximum.
    pub argmax: usize,
    /// Radius below the minimum pairwise distance (balls are singletons).
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoublingStats {
    pub rows: Vec<DoublingRow>,
    /// Largest κ̂ over the included radii (1 if none).
    pub kappa_max: f64,
    /// `log₂ κ̂_max`.
    pub exponent: f64,
}

/// Doubling constant estimated on a finite radius grid.
pub fn doubling_stats(space: &FiniteMetricMeasureSpace, radii: &[f64]) -> Result<DoublingStats> {
    if radii.is_empty() {
        return Err(Error::invalid("radius list is empty"));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("radii must be positive and finite"));
    }
    let min_d = space.min_distance();
    let mut rows: Vec<DoublingRow> = radii
        .iter()
        .map(|&r| DoublingRow { radius: r, kappa: 1.0, argmax: 0, excluded: r < min_d })
        .collect();
    if rows.iter().any(|r| !r.excluded) {
        for x in 0..space.len() {
            let (list, mass) = sorted_neighbors(space, x);
            for row in rows.iter_mut().filter(|r| !r.excluded) {
                let k1 = list.partition_point(|&(d, _)| d <= row.radius);
                let k2 = list.partition_point(|&(d, _)| d <= 2.0 * row.radius);
                let ratio = mass[k2] / mass[k1];
                if ratio > row.kappa {
                    row.kappa = ratio;
                    row.argmax = x;
                }
            }
        }
    }
    let kappa_max = rows.iter().filter(|r| !r.excluded).map(|r| r.kappa).fold(1.0, f64::max);
    Ok(DoublingStats { rows, kappa_max, exponent: math::log2(kappa_max) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LebesgueRow {
    pub radius: f64,
    /// Ball averages `A_r f(x)`.
    pub averages: Vec<f64>,
    /// `|A_r f(x) − f(x)|`.
    pub deviations: Vec<f64>,
}

/// Ball averages of `f` at each radius and their deviation from `f`.
pub fn lebesgue_density_profile(
    space: &FiniteMetricMeasureSpace,
    f: &ScalarField,
    radii: &[f64],
) -> Result<Vec<LebesgueRow>> {
    f.check_len(space)?;
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("radii must be positive and finite"));
    }
    let n = space.len();
    let mut rows: Vec<LebesgueRow> = radii
        .iter()
        .map(|&r| LebesgueRow { radius: r, averages: Vec::with_capacity(n), deviations: Vec::with_capacity(n) })
        .collect();
    for x in 0..n {
        for row in rows.iter_mut() {
            let mut m = 0.0;
            let mut s = 0.0;
            for y in 0..n {
                if space.dist(x, y) <= row.radius {
                    m += space.weight(y);
                    s += space.weight(y) * f.get(y);
                }
            }
            let avg = s / m;
            row.averages.push(avg);
            row.deviations.push((avg - f.get(x)).abs());
        }
    }
    Ok(rows)
}
