//! E4: Assouad embedding distortion against the snowflake exponent, depth
//! stability on Cantor sets, and the composite approximation `ũ_ε`.

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lipcalc_core::embedding::{assouad_embed, composite_approximation};
use lipcalc_core::space::generate_space;
use lipcalc_core::{ScalarField, SpaceSpec};

use super::{f, parse, Check, Outcome, Table};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub s_values: Vec<f64>,
    /// Exponent at which the distortion must agree across consecutive depths.
    pub stability_s: f64,
    pub stability_tol: f64,
    pub composite_points: usize,
    pub composite_s: f64,
    pub composite_eps: Vec<f64>,
    pub composite_center: usize,
    /// Allowed relative increase of the sup error when ε halves.
    pub error_slack: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            s_values: vec![0.3, 0.5, 0.7],
            stability_s: 0.5,
            stability_tol: 0.1,
            composite_points: 64,
            composite_s: 0.5,
            composite_eps: vec![8.0, 4.0, 2.0, 1.0],
            composite_center: 32,
            error_slack: 0.05,
        }
    }
}

pub fn default_space() -> SpaceSpec {
    SpaceSpec::middle_thirds(6)
}

pub fn run(spec: &SpaceSpec, params: &Value, seed: u64) -> Result<Outcome> {
    let p: Params = parse(params)?;
    let mut checks = Vec::new();
    let mut spaces = vec![("primary", spec.clone())];
    if let SpaceSpec::CantorIfs { maps, depth, masses } = spec {
        spaces.push(("refined", SpaceSpec::CantorIfs { maps: maps.clone(), depth: depth + 1, masses: masses.clone() }));
    }
    let mut s_values = p.s_values.clone();
    if !s_values.contains(&p.stability_s) {
        s_values.push(p.stability_s);
    }
    let mut rows = Vec::new();
    let mut stability = Vec::new();
    let mut all_positive = true;
    let mut certified = true;
    for (name, sp) in &spaces {
        let space = generate_space(sp)?;
        for &s in &s_values {
            let e = assouad_embed(&space, s, None, seed)?;
            all_positive &= e.k_low > 0.0;
            certified &= e.k_low >= e.certified_low && e.k_up <= e.certified_up;
            if s == p.stability_s {
                stability.push(e.distortion());
            }
            rows.push(vec![
                name.to_string(),
                f(s),
                space.len().to_string(),
                e.dim.to_string(),
                e.colors.to_string(),
                e.block.to_string(),
                f(e.k_low),
                f(e.k_up),
                f(e.distortion()),
                f(e.certified_low),
                f(e.certified_up),
                format!("{}-{}", space.ids()[e.audit.argmin.0], space.ids()[e.audit.argmin.1]),
                format!("{}-{}", space.ids()[e.audit.argmax.0], space.ids()[e.audit.argmax.1]),
            ]);
        }
    }
    checks.push(Check::new("k_low_positive", all_positive, "K_low > 0 on every embedded space"));
    checks.push(Check::new("constants_within_certificates", certified, "certified_low ≤ K_low and K_up ≤ certified_up"));
    if stability.len() == 2 {
        let rel = stability[1] / stability[0] - 1.0;
        checks.push(Check::new(
            "distortion_stable_across_depths",
            stability.iter().all(|r| r.is_finite()) && rel.abs() <= p.stability_tol,
            format!("K_up/K_low = {} → {} (relative change {rel})", stability[0], stability[1]),
        ));
    }
    let distortion = Table::new(
        "assouad",
        &["space", "s", "points", "dim", "colors", "block", "k_low", "k_up", "ratio", "certified_low", "certified_up", "worst_low_pair", "worst_up_pair"],
        rows,
    )?;

    let path = generate_space(&SpaceSpec::PathGraph { n: p.composite_points.max(2), edge: 1.0 })?;
    let u = ScalarField::coordinate(&path, 0)?;
    let emb = assouad_embed(&path, p.composite_s, None, seed)?;
    let center = p.composite_center.min(path.len() - 1);
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut within = true;
    for &eps in &p.composite_eps {
        let c = composite_approximation(&path, &u, &emb, eps, center)?;
        within &= c.within_bound;
        errors.push(c.sup_error);
        rows.push(vec![f(eps), f(c.lip), f(c.lip_u), f(c.k_prime), f(c.bound), f(c.safe_bound), f(c.lip_inner), f(c.sup_error)]);
    }
    checks.push(Check::new("composite_uniform_lipschitz", within, "L(ũ_ε) ≤ L(u) + K′ at every ε"));
    let decreasing = errors.windows(2).all(|w| w[1] <= w[0] * (1.0 + p.error_slack));
    checks.push(Check::new("composite_error_decreases", decreasing, format!("sup errors {errors:?}")));
    let composite = Table::new("composite", &["eps", "lip", "lip_u", "k_prime", "bound", "safe_bound", "lip_inner", "sup_error"], rows)?;
    Ok(Outcome { tables: vec![distortion, composite], checks })
}
