//! E3: essential rank of budget-stencil Jacobi fields across scales, and the
//! decay of `max |δ_h(id)|` on snowflaked segments.

use anyhow::{anyhow, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lipcalc_core::derivations::{build_stencil, rank_bound_experiment, RankRow, Scheme};
use lipcalc_core::space::generate_space;
use lipcalc_core::{FiniteMetricMeasureSpace, ScalarField, SpaceSpec};

use super::{f, parse, Check, Outcome, Table};
use crate::stats::loglog_slope;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Stencil radii as multiples of the minimum distance.
    pub radius_factors: Vec<f64>,
    pub budget: usize,
    pub line_step: f64,
    pub snowflake_exponents: Vec<f64>,
    /// Segment spacings `2^{−k}` for `k` in this inclusive range.
    pub levels: (u32, u32),
    pub slope_tol: f64,
    pub flat_slope_tol: f64,
    pub random_points: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            radius_factors: vec![1.0, 2.0],
            budget: 4,
            line_step: 1.0 / 32.0,
            snowflake_exponents: vec![0.5, 0.7],
            levels: (4, 9),
            slope_tol: 0.1,
            flat_slope_tol: 0.05,
            random_points: 200,
        }
    }
}

pub fn default_space() -> SpaceSpec {
    SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step: 1.0 / 16.0 }
}

/// Coordinates plus the squared norm.
fn generators(space: &FiniteMetricMeasureSpace) -> Result<Vec<ScalarField>> {
    let dim = space.ambient_dim().ok_or_else(|| anyhow!("rank sweep needs coordinates"))?;
    let mut g: Vec<ScalarField> = (0..dim).map(|i| ScalarField::coordinate(space, i)).collect::<lipcalc_core::Result<_>>()?;
    g.push(ScalarField::from_coords(space, |c| c.iter().map(|v| v * v).sum())?);
    Ok(g)
}

fn rank_rows(name: &str, rows: &[RankRow], out: &mut Vec<Vec<String>>) {
    for r in rows {
        let mass: Vec<String> = r.rank_mass.iter().map(|m| m.to_string()).collect();
        out.push(vec![name.into(), f(r.radius), f(r.tol), r.essential_rank.to_string(), f(r.tail_ratio), mass.join(";")]);
    }
}

/// `max_x |δ_h(id)(x)|` for the forward coordinate stencil on the segment
/// with spacing `step`, snowflaked by `s` when `s < 1`.
pub fn max_identity_derivative(step: f64, s: f64) -> Result<f64> {
    let base = generate_space(&SpaceSpec::grid_1d(0.0, 1.0, step))?;
    let space = if s < 1.0 { base.snowflake(s)? } else { base };
    let id = ScalarField::coordinate(&space, 0)?;
    // Slightly above the snowflaked spacing so rounding cannot drop a neighbor.
    let d = build_stencil(&space, &Scheme::CoordinateAxis { axis: 0 }, step.powf(s) * (1.0 + 1e-9))?;
    Ok(d.apply(&id)?.values().iter().fold(0.0, |m, v| m.max(v.abs())))
}

pub fn run(spec: &SpaceSpec, params: &Value, seed: u64) -> Result<Outcome> {
    let p: Params = parse(params)?;
    let mut rank_table = Vec::new();
    let mut checks = Vec::new();

    let primary = generate_space(spec)?;
    let h = primary.min_distance();
    let radii: Vec<f64> = p.radius_factors.iter().map(|k| k * h).collect();
    let dim = primary.ambient_dim().ok_or_else(|| anyhow!("E3 needs a space with coordinates"))?;
    let rows = rank_bound_experiment(&primary, &radii, &generators(&primary)?, p.budget, None, Some(dim))?;
    rank_rows("primary", &rows, &mut rank_table);
    for r in &rows {
        checks.push(Check::new(
            format!("primary_rank_r{}", r.radius),
            r.essential_rank == dim && r.tail_ratio <= 10.0 * r.radius,
            format!("essential rank {} (ambient {dim}), σ tail ratio {} vs 10h = {}", r.essential_rank, r.tail_ratio, 10.0 * r.radius),
        ));
    }

    let line = generate_space(&SpaceSpec::grid_1d(0.0, 1.0, p.line_step))?;
    let radii: Vec<f64> = p.radius_factors.iter().map(|k| k * p.line_step).collect();
    let rows = rank_bound_experiment(&line, &radii, &generators(&line)?, p.budget, None, Some(1))?;
    rank_rows("line", &rows, &mut rank_table);
    checks.push(Check::new(
        "line_rank_one",
        rows.iter().all(|r| r.essential_rank == 1),
        format!("essential ranks {:?}", rows.iter().map(|r| r.essential_rank).collect::<Vec<_>>()),
    ));

    let scatter = generate_space(&SpaceSpec::RandomPoints { n: p.random_points.max(2), dim: 2, seed })?;
    let r0 = 4.0 / (p.random_points.max(2) as f64).sqrt();
    let rows = rank_bound_experiment(&scatter, &[r0, 2.0 * r0], &generators(&scatter)?, p.budget, None, Some(2))?;
    rank_rows("random_square", &rows, &mut rank_table);

    let mut degen = Vec::new();
    let mut exponents = p.snowflake_exponents.clone();
    exponents.push(1.0);
    for &s in &exponents {
        let mut hs = Vec::new();
        let mut ms = Vec::new();
        for k in p.levels.0..=p.levels.1 {
            let step = 0.5f64.powi(k as i32);
            let m = max_identity_derivative(step, s)?;
            degen.push(vec![f(s), f(step), f(m)]);
            hs.push(step);
            ms.push(m);
        }
        let slope = loglog_slope(&hs, &ms);
        let (want, tol) = (1.0 - s, if s < 1.0 { p.slope_tol } else { p.flat_slope_tol });
        degen.push(vec![f(s), "slope".into(), f(slope)]);
        checks.push(Check::new(
            format!("snowflake_{s}_slope"),
            (slope - want).abs() <= tol,
            format!("slope {slope}, expected {want} ± {tol}"),
        ));
    }
    Ok(Outcome {
        tables: vec![
            Table::new("rank", &["space", "radius", "tol", "essential_rank", "tail_ratio", "rank_mass"], rank_table)?,
            Table::new("degeneration", &["s", "h", "max_abs_delta_id"], degen)?,
        ],
        checks,
    })
}
