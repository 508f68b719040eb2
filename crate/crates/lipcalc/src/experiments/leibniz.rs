//! E6: sup of the Leibniz defect `δ(fg) − f δg − g δf` of the forward
//! coordinate stencil against the grid spacing.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use lipcalc_core::derivations::{build_stencil, leibniz_defect, Scheme};
use lipcalc_core::space::generate_space;
use lipcalc_core::{Monomial, Polynomial, ScalarField, SpaceSpec};

use super::{f, parse, Check, Outcome, Table};
use crate::stats::loglog_slope;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Spacings `2^{−k}` for `k` in this inclusive range.
    pub levels: (u32, u32),
    pub random_pairs: usize,
    pub slope_range: (f64, f64),
}

impl Default for Params {
    fn default() -> Self {
        Params { levels: (4, 9), random_pairs: 3, slope_range: (0.85, 1.15) }
    }
}

/// The unit interval; its `lo`/`hi` are kept and the spacing is swept.
pub fn default_space() -> SpaceSpec {
    SpaceSpec::grid_1d(0.0, 1.0, 1.0 / 16.0)
}

fn poly(coeffs: &[f64]) -> Polynomial {
    Polynomial::new(coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, &c)| Monomial { exponents: vec![k as u32], coeff: c }).collect())
}

/// Fixed pairs plus seeded random cubic pairs, as coefficient lists.
pub fn family(random_pairs: usize, seed: u64) -> Vec<(String, Vec<f64>, Vec<f64>)> {
    let mut fam = vec![
        ("x*x".to_string(), vec![0.0, 1.0], vec![0.0, 1.0]),
        ("x^2*x^3".to_string(), vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 1.0]),
        ("(1+x)*(x^2-x)".to_string(), vec![1.0, 1.0], vec![0.0, -1.0, 1.0]),
        ("(x^3-x)*(2x^2+1)".to_string(), vec![0.0, -1.0, 0.0, 1.0], vec![1.0, 0.0, 2.0]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..random_pairs {
        let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        fam.push((format!("random{k}"), a, b));
    }
    fam
}

pub fn run(spec: &SpaceSpec, params: &Value, seed: u64) -> Result<Outcome> {
    let p: Params = parse(params)?;
    let (lo, hi) = match spec {
        SpaceSpec::EuclideanGrid { dim: 1, lo, hi, .. } => (*lo, *hi),
        _ => bail!("E6 runs on a one-dimensional grid"),
    };
    let fam = family(p.random_pairs, seed);
    let mut hs = Vec::new();
    let mut sups = vec![Vec::new(); fam.len()];
    let mut rows = Vec::new();
    for k in p.levels.0..=p.levels.1 {
        let h = 0.5f64.powi(k as i32);
        let space = generate_space(&SpaceSpec::grid_1d(lo, hi, h))?;
        let x = [ScalarField::coordinate(&space, 0)?];
        let delta = build_stencil(&space, &Scheme::CoordinateAxis { axis: 0 }, h * (1.0 + 1e-9))?;
        hs.push(h);
        for (i, (name, a, b)) in fam.iter().enumerate() {
            let d = leibniz_defect(&delta, &poly(a).compose(&x)?, &poly(b).compose(&x)?)?;
            sups[i].push(d.sup);
            rows.push(vec![name.clone(), f(h), f(d.sup)]);
        }
    }
    let mut checks = Vec::new();
    for (i, (name, ..)) in fam.iter().enumerate() {
        let slope = loglog_slope(&hs, &sups[i]);
        rows.push(vec![name.clone(), "slope".into(), f(slope)]);
        checks.push(Check::new(
            format!("{name}_slope"),
            slope >= p.slope_range.0 && slope <= p.slope_range.1,
            format!("log-log slope {slope}, expected in [{}, {}]", p.slope_range.0, p.slope_range.1),
        ));
    }
    Ok(Outcome { tables: vec![Table::new("leibniz", &["pair", "h", "sup_defect"], rows)?], checks })
}
