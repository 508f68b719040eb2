//! E7: minimal Hajłasz gradients on small random spaces against the
//! brute-force oracles.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lipcalc_core::hajlasz::{hajlasz_gradient, Exponent, SolverOptions};
use lipcalc_core::space::generate_space;
use lipcalc_core::{ScalarField, SpaceSpec};

use super::{f, parse, Check, Outcome, Table};
use crate::oracles::{hajlasz_p2_active_sets, hajlasz_sup_bruteforce};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub instances: usize,
    /// Tolerance on `Σ μ g²` against the oracle.
    pub tol: f64,
    pub solver_tol: f64,
    pub max_iters: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params { instances: 20, tol: 1e-6, solver_tol: 1e-12, max_iters: 100_000 }
    }
}

/// Template for the instances: each draws `2..=n` points of this dimension.
pub fn default_space() -> SpaceSpec {
    SpaceSpec::RandomPoints { n: 6, dim: 2, seed: 0 }
}

pub fn run(spec: &SpaceSpec, params: &Value, seed: u64) -> Result<Outcome> {
    let p: Params = parse(params)?;
    let (max_n, dim) = match spec {
        SpaceSpec::RandomPoints { n, dim, .. } if (2..=6).contains(n) => (*n, *dim),
        _ => bail!("E7 needs a random-points template with 2 to 6 points"),
    };
    let opts = SolverOptions { tol: p.solver_tol, max_iters: p.max_iters };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let (mut sup_exact, mut worst_p2) = (true, 0.0f64);
    for i in 0..p.instances {
        let n = rng.gen_range(2..=max_n);
        let space = generate_space(&SpaceSpec::RandomPoints { n, dim, seed: rng.gen() })?;
        let space = space.with_weights((0..n).map(|_| rng.gen_range(0.5..2.0)).collect())?;
        let u = ScalarField::new((0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())?;
        let sup = hajlasz_gradient(&space, &u, Exponent::Infinity, opts)?;
        let sup_oracle = hajlasz_sup_bruteforce(&space, &u);
        sup_exact &= sup.norm == sup_oracle;
        let two = hajlasz_gradient(&space, &u, Exponent::Finite(2.0), opts)?;
        let (oracle, _) = hajlasz_p2_active_sets(&space, &u);
        let objective = two.norm * two.norm;
        worst_p2 = worst_p2.max((objective - oracle).abs());
        rows.push(vec![i.to_string(), n.to_string(), f(sup.norm), f(sup_oracle), f(objective), f(oracle), f(two.gap), two.iterations.to_string()]);
    }
    let checks = vec![
        Check::new("sup_norm_matches_bruteforce", sup_exact, "p = ∞ norm equals the brute-force minimum exactly"),
        Check::new("p2_objective_matches_oracle", worst_p2 <= p.tol, format!("max |Σμg² − oracle| = {worst_p2:e} (tol {:e})", p.tol)),
    ];
    Ok(Outcome {
        tables: vec![Table::new("hajlasz", &["instance", "points", "sup_norm", "sup_oracle", "p2_objective", "p2_oracle", "gap", "iterations"], rows)?],
        checks,
    })
}
