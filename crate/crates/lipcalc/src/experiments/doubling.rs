//! E1: doubling constants `κ̂(r)` across a radius sweep on several spaces.

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lipcalc_core::lipschitz::geometric_scales;
use lipcalc_core::space::{doubling_stats, generate_space};
use lipcalc_core::SpaceSpec;

use super::{f, parse, Check, Outcome, Table};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Radii per space.
    pub radii: usize,
    pub grid_side: usize,
    pub cantor_depth: u32,
    pub random_points: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params { radii: 6, grid_side: 17, cantor_depth: 8, random_points: 300 }
    }
}

/// The integer segment `{0, 1, …, 63}`.
pub fn default_space() -> SpaceSpec {
    SpaceSpec::grid_1d(0.0, 63.0, 1.0)
}

fn is_integer_segment(spec: &SpaceSpec) -> bool {
    match spec {
        SpaceSpec::EuclideanGrid { dim: 1, step, lo, .. } => *step == 1.0 && lo.fract() == 0.0,
        SpaceSpec::PathGraph { edge, .. } => *edge == 1.0,
        _ => false,
    }
}

pub fn run(spec: &SpaceSpec, params: &Value, seed: u64) -> Result<Outcome> {
    let p: Params = parse(params)?;
    let side = p.grid_side.max(2);
    let others = [
        ("grid_2d", SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step: 1.0 / (side - 1) as f64 }),
        ("cantor", SpaceSpec::middle_thirds(p.cantor_depth)),
        ("random_square", SpaceSpec::RandomPoints { n: p.random_points.max(2), dim: 2, seed }),
    ];
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    let mut all_at_least_one = true;
    for (name, sp) in std::iter::once(("primary", spec.clone())).chain(others.iter().cloned()) {
        let space = generate_space(&sp)?;
        let radii: Vec<f64> = if name == "primary" && is_integer_segment(&sp) {
            // Integer radii 1, 2, 4, …: the ball counts have closed forms.
            (0..p.radii).map(|j| (1u64 << j) as f64).filter(|&r| r <= space.diameter()).collect()
        } else {
            geometric_scales(space.diameter() / 2.0, p.radii)
        };
        let stats = doubling_stats(&space, &radii)?;
        for r in &stats.rows {
            all_at_least_one &= r.kappa >= 1.0;
            rows.push(vec![name.to_string(), f(r.radius), f(r.kappa), space.ids()[r.argmax].clone(), r.excluded.to_string()]);
        }
        rows.push(vec![name.to_string(), "max".into(), f(stats.kappa_max), String::new(), format!("exponent={}", stats.exponent)]);
        if name == "primary" && is_integer_segment(&sp) {
            checks.push(Check::new(
                "integer_segment_kappa_below_2",
                stats.kappa_max < 2.0,
                format!("max κ̂ = {}", stats.kappa_max),
            ));
        }
    }
    checks.push(Check::new("kappa_at_least_one", all_at_least_one, "κ̂(r) ≥ 1 at every radius"));
    Ok(Outcome { tables: vec![Table::new("doubling", &["space", "radius", "kappa", "argmax", "excluded"], rows)?], checks })
}
