//! E5: least-squares differentials of a polynomial on a planar grid against
//! its analytic gradient, and residual-profile verdicts.

use anyhow::{anyhow, bail, Result};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lipcalc_core::differentiability::{estimate_differential, residual_profile_with_lip, Chart};
use lipcalc_core::lipschitz::global_lip;
use lipcalc_core::lipschitz::geometric_scales;
use lipcalc_core::math::dist;
use lipcalc_core::space::generate_space;
use lipcalc_core::{FiniteMetricMeasureSpace, Monomial, Polynomial, ScalarField, SpaceSpec};

use super::{f, parse, Check, Outcome, Table};
use crate::stats::loglog_slope;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub polynomial: Polynomial,
    /// Largest radius; the sweep halves it `halvings` times.
    pub r0: f64,
    pub halvings: usize,
    /// Random points evaluated besides the boundary of the bounding box.
    pub samples: usize,
    pub slope_range: (f64, f64),
    /// Constant `C` in `max |Df − ∇f| ≤ C r`.
    pub error_constant: f64,
    pub residual_points: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            polynomial: Polynomial::new(vec![
                Monomial { exponents: vec![2, 0], coeff: 1.0 },
                Monomial { exponents: vec![1, 1], coeff: 1.0 },
            ]),
            r0: 0.32,
            halvings: 4,
            samples: 300,
            slope_range: (0.8, 1.2),
            error_constant: 2.0,
            residual_points: 20,
        }
    }
}

/// The 101 × 101 grid on the unit square.
pub fn default_space() -> SpaceSpec {
    SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step: 0.01 }
}

/// Points with an extreme coordinate (the boundary of the bounding box), plus
/// `extra` random points drawn with `seed`.
pub fn evaluation_points(space: &FiniteMetricMeasureSpace, extra: usize, seed: u64) -> Vec<usize> {
    let coords = space.coords().unwrap();
    let dim = coords[0].len();
    let lo: Vec<f64> = (0..dim).map(|i| coords.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..dim).map(|i| coords.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut pts: Vec<usize> = (0..space.len()).filter(|&x| (0..dim).any(|i| coords[x][i] == lo[i] || coords[x][i] == hi[i])).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pts.extend(sample(&mut rng, space.len(), extra.min(space.len())));
    pts.sort_unstable();
    pts.dedup();
    pts
}

pub fn run(spec: &SpaceSpec, params: &Value, seed: u64) -> Result<Outcome> {
    let p: Params = parse(params)?;
    let space = generate_space(spec)?;
    let dim = space.ambient_dim().ok_or_else(|| anyhow!("E5 needs a space with coordinates"))?;
    if p.polynomial.arity() != dim {
        bail!("polynomial has {} variables, space has dimension {dim}", p.polynomial.arity());
    }
    let coords = space.coords().unwrap();
    let coord_fields: Vec<ScalarField> = (0..dim).map(|i| ScalarField::coordinate(&space, i)).collect::<lipcalc_core::Result<_>>()?;
    let field = p.polynomial.compose(&coord_fields)?;
    let chart = Chart::ambient(&space)?;
    let points = evaluation_points(&space, p.samples, seed);
    let radii = geometric_scales(p.r0, p.halvings + 1);

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut bounded = true;
    for &r in &radii {
        let mut worst = (0.0f64, points[0]);
        for &x in &points {
            let df = estimate_differential(&space, &field, &chart, x, r)?;
            let e = dist(&df, &p.polynomial.gradient(&coords[x]));
            if e > worst.0 {
                worst = (e, x);
            }
        }
        bounded &= worst.0 <= p.error_constant * r;
        errors.push(worst.0);
        rows.push(vec![f(r), f(worst.0), f(worst.0 / r), space.ids()[worst.1].clone()]);
    }
    let slope = loglog_slope(&radii, &errors);
    let mut checks = vec![
        Check::new("error_first_order", bounded, format!("max |Df − ∇f| / r = {:?}", rows.iter().map(|r| r[2].clone()).collect::<Vec<_>>())),
        Check::new(
            "error_halving_slope",
            slope >= p.slope_range.0 && slope <= p.slope_range.1,
            format!("log-log slope {slope}, expected in [{}, {}]", p.slope_range.0, p.slope_range.1),
        ),
    ];
    let errors_table = Table::new("differential_error", &["radius", "max_error", "error_over_radius", "worst_point"], rows)?;

    // Residual verdicts at random points, with Df estimated at the finest radius.
    let finest = *radii.last().unwrap();
    let scales: Vec<f64> = radii.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut rows = Vec::new();
    let mut verdicts = 0;
    let lip = global_lip(&space, &field)?;
    let picks = sample(&mut rng, space.len(), p.residual_points.min(space.len())).into_vec();
    for &x in &picks {
        let df = estimate_differential(&space, &field, &chart, x, finest)?;
        let prof = residual_profile_with_lip(&space, &field, &chart, &df, x, &scales, lip)?;
        verdicts += prof.differentiable as usize;
        let res: Vec<String> = prof.residuals.iter().map(|v| v.to_string()).collect();
        rows.push(vec![space.ids()[x].clone(), res.join(";"), prof.differentiable.to_string()]);
    }
    checks.push(Check::new(
        "residual_verdicts",
        verdicts == picks.len(),
        format!("{verdicts} of {} sampled points judged differentiable", picks.len()),
    ));
    let residual_table = Table::new("residuals", &["point", "residuals", "differentiable"], rows)?;
    Ok(Outcome { tables: vec![errors_table, residual_table], checks })
}
