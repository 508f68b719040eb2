//! Minimal Hajłasz gradients: the smallest `g ≥ 0` in `L^p(μ)` with
//! `|u(x) − u(y)| ≤ (g(x) + g(y)) d(x, y)` for every pair.
//!
//! For finite `p` the problem is solved through its Lagrangian dual by exact
//! coordinate ascent over the pair multipliers. Every sweep yields a feasible
//! primal point (the dual iterate lifted by half the worst violation), so the
//! duality gap certifies the objective.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::field::ScalarField;
use crate::math::powf;
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Exponent {
    pub fn validate(self) -> Result<()> {
        match self {
            Exponent::Finite(p) if !(p.is_finite() && p > 1.0) => Err(Error::invalid("exponent p must lie in (1, ∞]")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HajlaszGradient {
    pub exponent: Exponent,
    pub g: Vec<f64>,
    /// `(Σ μ g^p)^{1/p}`, or `max g` for `p = ∞`.
    pub norm: f64,
    /// Sweeps used by the iterative solver (0 for the closed form).
    pub iterations: usize,
    /// Certified upper bound on `Σ μ g^p − optimum`.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the duality gap is below `tol · max(objective, 1)`.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-12, max_iters: 100_000 }
    }
}

/// Largest violation of the pairwise constraint, 0 when all hold.
pub fn max_violation(space: &FiniteMetricMeasureSpace, u: &ScalarField, g: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..space.len() {
        for j in i + 1..space.len() {
            let v = (u.get(i) - u.get(j)).abs() - (g[i] + g[j]) * space.dist(i, j);
            worst = worst.max(v);
        }
    }
    worst
}

/// `(Σ μ(x) g(x)^p)^{1/p}`.
pub fn lp_norm(space: &FiniteMetricMeasureSpace, g: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => g.iter().copied().fold(0.0, f64::max),
        Exponent::Finite(p) => powf(energy(space.weights(), g, p), 1.0 / p),
    }
}

fn energy(mu: &[f64], g: &[f64], p: f64) -> f64 {
    mu.iter().zip(g).map(|(m, v)| m * powf(*v, p)).sum()
}

pub fn hajlasz_gradient(
    space: &FiniteMetricMeasureSpace,
    u: &ScalarField,
    p: Exponent,
    opts: SolverOptions,
) -> Result<HajlaszGradient> {
    u.check_len(space)?;
    p.validate()?;
    let n = space.len();
    let t = max_half_slope(space, u);
    match p {
        Exponent::Infinity => Ok(HajlaszGradient { exponent: p, g: vec![t; n], norm: t, iterations: 0, gap: 0.0 }),
        Exponent::Finite(p) => {
            if t == 0.0 {
                return Ok(HajlaszGradient { exponent: Exponent::Finite(p), g: vec![0.0; n], norm: 0.0, iterations: 0, gap: 0.0 });
            }
            solve_finite(space, u, p, opts)
        }
    }
}

/// `max_{x≠y} |u(x) − u(y)| / (2 d(x, y))`.
fn max_half_slope(space: &FiniteMetricMeasureSpace, u: &ScalarField) -> f64 {
    let mut t = 0.0f64;
    for i in 0..space.len() {
        for j in i + 1..space.len() {
            t = t.max((u.get(i) - u.get(j)).abs() / (2.0 * space.dist(i, j)));
        }
    }
    t
}

struct Pair {
    x: usize,
    y: usize,
    /// Required value of `g(x) + g(y)`.
    c: f64,
}

fn solve_finite(space: &FiniteMetricMeasureSpace, u: &ScalarField, p: f64, opts: SolverOptions) -> Result<HajlaszGradient> {
    let n = space.len();
    let mu = space.weights();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let c = (u.get(i) - u.get(j)).abs() / space.dist(i, j);
            if c > 0.0 {
                pairs.push(Pair { x: i, y: j, c });
            }
        }
    }
    let q = 1.0 / (p - 1.0);
    // g_x = a_x Λ_x^q, the minimizer of μ g^p − Λ g.
    let a: Vec<f64> = mu.iter().map(|m| powf(p * m, -q)).collect();
    let link = |x: usize, lam: f64| if lam <= 0.0 { 0.0 } else { a[x] * powf(lam, q) };

    let mut lambda = vec![0.0f64; pairs.len()];
    let mut big = vec![0.0f64; n];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut gap = f64::INFINITY;
    for sweep in 1..=opts.max_iters {
        for (e, pair) in pairs.iter().enumerate() {
            let lx = (big[pair.x] - lambda[e]).max(0.0);
            let ly = (big[pair.y] - lambda[e]).max(0.0);
            let new = if link(pair.x, lx) + link(pair.y, ly) >= pair.c {
                0.0
            } else {
                solve_pair(a[pair.x], a[pair.y], lx, ly, q, pair.c)
            };
            big[pair.x] = lx + new;
            big[pair.y] = ly + new;
            lambda[e] = new;
        }
        let g: Vec<f64> = (0..n).map(|x| link(x, big[x])).collect();
        let worst = pairs.iter().map(|e| e.c - g[e.x] - g[e.y]).fold(0.0f64, f64::max);
        let dual = pairs.iter().zip(&lambda).map(|(e, l)| l * e.c).sum::<f64>() - (p - 1.0) * energy(mu, &g, p);
        let feasible: Vec<f64> = g.iter().map(|v| v + 0.5 * worst).collect();
        let primal = energy(mu, &feasible, p);
        gap = (primal - dual).max(0.0);
        if best.as_ref().is_none_or(|(b, _)| primal < *b) {
            best = Some((primal, feasible));
        }
        if gap <= opts.tol * primal.max(1.0) {
            let (energy, g) = best.unwrap();
            return Ok(HajlaszGradient { exponent: Exponent::Finite(p), g, norm: powf(energy, 1.0 / p), iterations: sweep, gap });
        }
    }
    let best = best.map(|b| b.1).unwrap_or_else(|| vec![max_half_slope(space, u); n]);
    Err(Error::NotConverged { iterations: opts.max_iters, gap, best })
}

/// Smallest `λ ≥ 0` with `a_x (l_x + λ)^q + a_y (l_y + λ)^q = c`, given that
/// the left side is below `c` at `λ = 0`.
fn solve_pair(ax: f64, ay: f64, lx: f64, ly: f64, q: f64, c: f64) -> f64 {
    if q == 1.0 {
        return ((c - ax * lx - ay * ly) / (ax + ay)).max(0.0);
    }
    let phi = |l: f64| ax * powf(lx + l, q) + ay * powf(ly + l, q) - c;
    let dphi = |l: f64| q * (ax * powf(lx + l, q - 1.0) + ay * powf(ly + l, q - 1.0));
    let mut lo = 0.0f64;
    // Either term alone reaches c here.
    let mut hi = (powf(c / ax, 1.0 / q) - lx).min(powf(c / ay, 1.0 / q) - ly).max(0.0);
    let mut l = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = phi(l);
        if v > 0.0 {
            hi = l;
        } else {
            lo = l;
        }
        let d = dphi(l);
        let newton = if d > 0.0 && d.is_finite() { l - v / d } else { f64::NAN };
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - l).abs() <= 1e-16 * hi.max(1e-300) || hi - lo <= 1e-16 * hi {
            l = next;
            break;
        }
        l = next;
    }
    l.max(0.0)
}
