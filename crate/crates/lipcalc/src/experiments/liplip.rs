//! E2: distribution of `Lip̂ f(x) / lip̂ f(x)` for smooth functions on
//! Euclidean grids, and the same ratio on a Cantor set for inspection.

use anyhow::{anyhow, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lipcalc_core::lipschitz::{geometric_scales, liplip_ratio};
use lipcalc_core::space::generate_space;
use lipcalc_core::{Error, FiniteMetricMeasureSpace, Monomial, Polynomial, ScalarField, SpaceSpec};

use super::{f, parse, Check, Outcome, Table};
use crate::stats::weighted_quantile;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub line_step: f64,
    /// Scales are `r0, r0/2, …` with `r0 = scale_factor · (min distance)`.
    pub scale_factor: f64,
    pub scale_count: usize,
    pub quantile: f64,
    pub budget: f64,
    pub cantor_depth: u32,
}

impl Default for Params {
    fn default() -> Self {
        Params { line_step: 1.0 / 256.0, scale_factor: 12.0, scale_count: 3, quantile: 0.99, budget: 1.5, cantor_depth: 8 }
    }
}

pub fn default_space() -> SpaceSpec {
    SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step: 1.0 / 64.0 }
}

fn mono(exponents: &[u32], coeff: f64) -> Monomial {
    Monomial { exponents: exponents.to_vec(), coeff }
}

/// Polynomials whose gradients do not vanish on the unit cube.
pub fn smooth_family(dim: usize) -> Vec<(&'static str, Polynomial)> {
    if dim == 1 {
        vec![
            ("x", Polynomial::new(vec![mono(&[1], 1.0)])),
            ("x^2+x", Polynomial::new(vec![mono(&[2], 1.0), mono(&[1], 1.0)])),
            ("x^3+x", Polynomial::new(vec![mono(&[3], 1.0), mono(&[1], 1.0)])),
        ]
    } else {
        vec![
            ("x1+2x2", Polynomial::new(vec![mono(&[1, 0], 1.0), mono(&[0, 1], 2.0)])),
            ("x1^2+x1+x2", Polynomial::new(vec![mono(&[2, 0], 1.0), mono(&[1, 0], 1.0), mono(&[0, 1], 1.0)])),
            ("x1x2+x1+x2", Polynomial::new(vec![mono(&[1, 1], 1.0), mono(&[1, 0], 1.0), mono(&[0, 1], 1.0)])),
            ("x2^3+x1", Polynomial::new(vec![mono(&[0, 3], 1.0), mono(&[1, 0], 1.0)])),
        ]
    }
}

fn coordinate_fields(space: &FiniteMetricMeasureSpace, dim: usize) -> Result<Vec<ScalarField>> {
    Ok((0..dim).map(|i| ScalarField::coordinate(space, i)).collect::<lipcalc_core::Result<_>>()?)
}

/// Per-point ratios; NaN where no scale resolves the point.
pub fn ratios(space: &FiniteMetricMeasureSpace, field: &ScalarField, scales: &[f64]) -> Result<Vec<f64>> {
    (0..space.len())
        .map(|x| match liplip_ratio(space, field, x, scales) {
            Ok(v) => Ok(v),
            Err(Error::NoUsableScales) => Ok(f64::NAN),
            Err(e) => Err(e.into()),
        })
        .collect()
}

pub fn run(spec: &SpaceSpec, params: &Value, seed: u64) -> Result<Outcome> {
    let p: Params = parse(params)?;
    let primary = generate_space(spec)?;
    let dim = primary.ambient_dim().ok_or_else(|| anyhow!("E2 needs a space with coordinates"))?.min(2);
    let line = generate_space(&SpaceSpec::grid_1d(0.0, 1.0, p.line_step))?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (name, space, d) in [("primary", &primary, dim), ("line", &line, 1)] {
        let scales = geometric_scales(p.scale_factor * space.min_distance(), p.scale_count);
        let coords = coordinate_fields(space, d)?;
        for (fname, poly) in smooth_family(d) {
            let field = poly.compose(&coords)?;
            let r = ratios(space, &field, &scales)?;
            let q50 = weighted_quantile(&r, space.weights(), 0.5);
            let q = weighted_quantile(&r, space.weights(), p.quantile);
            let max = r.iter().copied().filter(|v| !v.is_nan()).fold(0.0, f64::max);
            rows.push(vec![name.into(), fname.into(), f(q50), f(q), f(max)]);
            checks.push(Check::new(
                format!("{name}_{fname}_quantile_within_budget"),
                q <= p.budget,
                format!("μ-weighted {} quantile {q} (budget {})", p.quantile, p.budget),
            ));
        }
    }
    let euclid = Table::new("liplip_euclidean", &["space", "function", "q50", "q_budget", "max"], rows)?;

    let cantor = generate_space(&SpaceSpec::middle_thirds(p.cantor_depth))?;
    let scales = geometric_scales(cantor.diameter() / 4.0, 6);
    let base = ChaCha8Rng::seed_from_u64(seed).gen_range(0..cantor.len());
    let fields = [("x", ScalarField::coordinate(&cantor, 0)?), ("dist_to_base", ScalarField::distance_to(&cantor, base)?)];
    let mut rows = Vec::new();
    for (fname, field) in &fields {
        for (x, v) in ratios(&cantor, field, &scales)?.into_iter().enumerate() {
            rows.push(vec![fname.to_string(), cantor.ids()[x].clone(), f(v)]);
        }
    }
    let cantor_table = Table::new("liplip_cantor", &["function", "point_id", "ratio"], rows)?;
    Ok(Outcome { tables: vec![euclid, cantor_table], checks })
}
