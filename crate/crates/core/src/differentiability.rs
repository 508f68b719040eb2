//! Charts, least-squares differentials, first-order residual profiles, the
//! Lip-derivation comparison and the chart constant `K(x)`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::derivations::StencilDerivation;
use crate::field::ScalarField;
use crate::linalg::Matrix;
use crate::lipschitz::{ball_sups, pointwise_lip_profile, usable_scales};
use crate::math::{ceil, cos, dist, dot, ln, log2, norm, powi, sin, sqrt};
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

/// Relative threshold on the finest residual for a positive verdict.
pub const RESIDUAL_THRESHOLD: f64 = 0.05;
/// Relative singular value below which the coordinate spread is degenerate.
pub const SPREAD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub points: Vec<usize>,
    pub coordinates: Vec<ScalarField>,
    /// `L(ξ)` for the Euclidean norm on the target.
    pub lip: f64,
}

impl Chart {
    pub fn new(space: &FiniteMetricMeasureSpace, mut points: Vec<usize>, coordinates: Vec<ScalarField>) -> Result<Self> {
        for c in &coordinates {
            c.check_len(space)?;
        }
        for &p in &points {
            space.check_point(p)?;
        }
        points.sort_unstable();
        points.dedup();
        let mut lip = 0.0f64;
        for i in 0..space.len() {
            for j in i + 1..space.len() {
                let d: f64 = coordinates.iter().map(|c| (c.get(i) - c.get(j)) * (c.get(i) - c.get(j))).sum();
                lip = lip.max(sqrt(d) / space.dist(i, j));
            }
        }
        Ok(Chart { points, coordinates, lip })
    }

    /// The whole space with its ambient coordinates.
    pub fn ambient(space: &FiniteMetricMeasureSpace) -> Result<Self> {
        let dim = space.ambient_dim().ok_or_else(|| Error::invalid("space has no coordinates"))?;
        let coords = (0..dim).map(|i| ScalarField::coordinate(space, i)).collect::<Result<Vec<_>>>()?;
        Chart::new(space, (0..space.len()).collect(), coords)
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    pub fn xi(&self, x: usize) -> Vec<f64> {
        self.coordinates.iter().map(|c| c.get(x)).collect()
    }

    fn delta(&self, x: usize, y: usize) -> Vec<f64> {
        self.coordinates.iter().map(|c| c.get(y) - c.get(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualProfile {
    pub point: usize,
    pub scales: Vec<f64>,
    /// `sup_{y ∈ B̄(x,r)} |f(y) − f(x) − Df·(ξ(y) − ξ(x))| / r`.
    pub residuals: Vec<f64>,
    pub differentiable: bool,
}

pub fn residual_profile(
    space: &FiniteMetricMeasureSpace,
    f: &ScalarField,
    chart: &Chart,
    df: &[f64],
    x: usize,
    scales: &[f64],
) -> Result<ResidualProfile> {
    let lip = crate::lipschitz::global_lip(space, f)?;
    residual_profile_with_lip(space, f, chart, df, x, scales, lip)
}

/// [`residual_profile`] with `L(f)` supplied by the caller, for sweeps over
/// many points of a large space.
pub fn residual_profile_with_lip(
    space: &FiniteMetricMeasureSpace,
    f: &ScalarField,
    chart: &Chart,
    df: &[f64],
    x: usize,
    scales: &[f64],
    lip: f64,
) -> Result<ResidualProfile> {
    f.check_len(space)?;
    if df.len() != chart.dim() {
        return Err(Error::LengthMismatch { expected: chart.dim(), got: df.len() });
    }
    let (used, _) = usable_scales(space, x, scales)?;
    let sup = ball_sups(space, x, &used, |y| (f.get(y) - f.get(x) - dot(df, &chart.delta(x, y))).abs());
    let residuals: Vec<f64> = sup.iter().zip(&used).map(|(s, r)| s / r).collect();
    let finest = *residuals.last().unwrap();
    let tail = &residuals[residuals.len().saturating_sub(3)..];
    let monotone = tail.windows(2).all(|w| w[1] <= w[0]);
    Ok(ResidualProfile { point: x, scales: used, residuals, differentiable: finest <= RESIDUAL_THRESHOLD * lip && monotone })
}

/// Least-squares `v` minimizing `Σ_{y ∈ B̄(x,r)} (f(y) − f(x) − v·(ξ(y) − ξ(x)))²`.
pub fn estimate_differential(space: &FiniteMetricMeasureSpace, f: &ScalarField, chart: &Chart, x: usize, r: f64) -> Result<Vec<f64>> {
    f.check_len(space)?;
    let ball = space.ball(x, r)?;
    let n = chart.dim();
    let rows: Vec<Vec<f64>> = ball.iter().filter(|&&y| y != x).map(|&y| chart.delta(x, y)).collect();
    let rhs: Vec<f64> = ball.iter().filter(|&&y| y != x).map(|&y| f.get(y) - f.get(x)).collect();
    if n == 0 {
        return Ok(Vec::new());
    }
    let a = if rows.is_empty() { Matrix::zeros(1, n) } else { Matrix::from_rows(&rows) };
    let svd = a.svd();
    let sv = &svd.singular_values;
    let full = sv.len() == n && sv[0] > 0.0 && sv[n - 1] > SPREAD_TOL * sv[0];
    if !full {
        let normal = a.transpose().mul(&a).svd();
        return Err(Error::RankDeficient { direction: normal.v.column(n - 1) });
    }
    Ok(svd.solve(&rhs, SPREAD_TOL))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentialField {
    pub scale: f64,
    /// Per chart point, `(point, Df(point))`.
    pub values: Vec<(usize, Vec<f64>)>,
    /// Chart points where the coordinate spread was degenerate.
    pub degenerate: Vec<(usize, Vec<f64>)>,
}

pub fn estimate_differential_field(space: &FiniteMetricMeasureSpace, f: &ScalarField, chart: &Chart, r: f64) -> Result<DifferentialField> {
    let mut values = Vec::new();
    let mut degenerate = Vec::new();
    for &x in &chart.points {
        match estimate_differential(space, f, chart, x, r) {
            Ok(v) => values.push((x, v)),
            Err(Error::RankDeficient { direction }) => degenerate.push((x, direction)),
            Err(e) => return Err(e),
        }
    }
    Ok(DifferentialField { scale: r, values, degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipDerivReport {
    /// Per point, `max_f max(|df|/Lip̂ f, Lip̂ f/|df|)` with `0/0 = 1`; NaN
    /// where no requested scale resolves the point.
    pub k_hat: Vec<f64>,
    /// μ-fraction of resolved points with `K̂ ≤ budget`.
    pub fraction_within: f64,
    pub budget: f64,
    pub unresolved: Vec<usize>,
}

pub fn lipderiv_check(
    space: &FiniteMetricMeasureSpace,
    family: &[ScalarField],
    basis: &[StencilDerivation],
    scales: &[f64],
    budget: f64,
) -> Result<LipDerivReport> {
    if family.is_empty() {
        return Err(Error::invalid("function family is empty"));
    }
    let applied: Vec<Vec<ScalarField>> =
        family.iter().map(|f| basis.iter().map(|d| d.apply(f)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    let mut k_hat = vec![f64::NAN; space.len()];
    let mut unresolved = Vec::new();
    let (mut within, mut resolved) = (0.0, 0.0);
    for (x, k) in k_hat.iter_mut().enumerate() {
        let mut worst = 1.0f64;
        let mut ok = true;
        for (f, df) in family.iter().zip(&applied) {
            let lip = match pointwise_lip_profile(space, f, x, scales) {
                Ok(p) => p.upper,
                Err(Error::NoUsableScales) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            };
            let d = norm(&df.iter().map(|g| g.get(x)).collect::<Vec<_>>());
            let r = crate::math::ratio_or_one(d, lip).max(crate::math::ratio_or_one(lip, d));
            worst = worst.max(r);
        }
        if !ok {
            unresolved.push(x);
            continue;
        }
        *k = worst;
        resolved += space.weight(x);
        if worst <= budget {
            within += space.weight(x);
        }
    }
    let fraction_within = if resolved > 0.0 { within / resolved } else { 0.0 };
    Ok(LipDerivReport { k_hat, fraction_within, budget, unresolved })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartConstant {
    pub point: usize,
    /// `min_c Lip̂[c·ξ](x)` over the sampled unit directions.
    pub k_hat: f64,
    pub direction: Vec<f64>,
    pub samples: usize,
    /// `K̂ < 1e-6 · L(ξ)`: the point belongs to the degenerate set.
    pub degenerate: bool,
}

/// Deterministic unit directions: `±1` for `n = 1`, half-circle angles
/// `kπ/m` for `n = 2`, and Halton points pushed through Box–Muller for
/// `n ≥ 3`. At least `100 n` directions.
pub fn sphere_samples(n: usize, count: usize) -> Vec<Vec<f64>> {
    let count = count.max(100 * n);
    match n {
        0 => Vec::new(),
        1 => vec![vec![1.0]],
        2 => (0..count)
            .map(|k| {
                let t = core::f64::consts::PI * k as f64 / count as f64;
                vec![cos(t), sin(t)]
            })
            .collect(),
        _ => {
            let primes = first_primes(2 * n);
            let pairs = n.div_ceil(2);
            (1..=count)
                .map(|k| {
                    let mut v = Vec::with_capacity(2 * pairs);
                    for p in 0..pairs {
                        let u1 = radical_inverse(k as u64, primes[2 * p]).max(1e-300);
                        let u2 = radical_inverse(k as u64, primes[2 * p + 1]);
                        let rad = sqrt(-2.0 * ln(u1));
                        let t = 2.0 * core::f64::consts::PI * u2;
                        v.push(rad * cos(t));
                        v.push(rad * sin(t));
                    }
                    v.truncate(n);
                    let len = norm(&v);
                    v.iter().map(|c| c / len).collect()
                })
                .collect()
        }
    }
}

fn first_primes(k: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(k);
    let mut c = 2u64;
    while out.len() < k {
        if out.iter().all(|p| !c.is_multiple_of(*p)) {
            out.push(c);
        }
        c += 1;
    }
    out
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * inv;
        k /= base;
        inv /= base as f64;
    }
    out
}

/// `Lip̂[c·ξ](x)` over the given scales.
pub fn directional_lip(space: &FiniteMetricMeasureSpace, chart: &Chart, x: usize, c: &[f64], scales: &[f64]) -> Result<f64> {
    let (used, _) = usable_scales(space, x, scales)?;
    let sup = ball_sups(space, x, &used, |y| dot(c, &chart.delta(x, y)).abs());
    Ok(sup.iter().zip(&used).map(|(s, r)| s / r).fold(0.0, f64::max))
}

pub fn chart_lower_constant(
    space: &FiniteMetricMeasureSpace,
    chart: &Chart,
    x: usize,
    scales: &[f64],
    samples: usize,
) -> Result<ChartConstant> {
    let n = chart.dim();
    if n == 0 {
        return Err(Error::invalid("chart has no coordinates"));
    }
    let (used, _) = usable_scales(space, x, scales)?;
    // Coordinate increments per scale, scaled by 1/r.
    let largest = used[0];
    let mut rows: Vec<(f64, Vec<f64>)> = Vec::new();
    for y in 0..space.len() {
        let d = space.dist(x, y);
        if y != x && d <= largest {
            rows.push((d, chart.delta(x, y)));
        }
    }
    let value = |c: &[f64]| {
        used.iter()
            .map(|&r| rows.iter().filter(|(d, _)| *d <= r).map(|(_, v)| dot(c, v).abs()).fold(0.0, f64::max) / r)
            .fold(0.0, f64::max)
    };
    let mut candidates = sphere_samples(n, samples);
    // The least-spread direction of the stacked increments is the natural
    // candidate for a degenerate coordinate combination.
    if !rows.is_empty() {
        let stacked: Vec<Vec<f64>> = rows.iter().map(|(d, v)| v.iter().map(|t| t / d.max(f64::MIN_POSITIVE)).collect()).collect();
        let a = Matrix::from_rows(&stacked);
        let normal = a.transpose().mul(&a).svd();
        candidates.push(normal.v.column(n - 1));
    }
    let count = candidates.len();
    let mut best = (f64::INFINITY, candidates[0].clone());
    for c in candidates {
        let v = value(&c);
        if v < best.0 {
            best = (v, c);
        }
    }
    Ok(ChartConstant { point: x, k_hat: best.0, direction: best.1, samples: count, degenerate: best.0 < 1e-6 * chart.lip })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subchart {
    pub k: i32,
    pub points: Vec<usize>,
    /// `2^{k+1}`.
    pub constant: f64,
}

/// Bins points by `2^{−(k+1)} ≤ K̂ < 2^{−k}`; non-positive or non-finite
/// values are left out.
pub fn subchart_partition(values: &[(usize, f64)]) -> Vec<Subchart> {
    let mut bins: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for &(x, kv) in values {
        if !(kv.is_finite() && kv > 0.0) {
            continue;
        }
        let mut k = ceil(-log2(kv)) as i32 - 1;
        while kv < powi(2.0, -(k + 1)) {
            k += 1;
        }
        while kv >= powi(2.0, -k) {
            k -= 1;
        }
        bins.entry(k).or_default().push(x);
    }
    bins.into_iter().map(|(k, points)| Subchart { k, points, constant: powi(2.0, k + 1) }).collect()
}

/// Euclidean distance between two differentials.
pub fn differential_gap(a: &[f64], b: &[f64]) -> f64 {
    dist(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivations::{build_stencil, build_stencils, Scheme};
    use crate::lipschitz::geometric_scales;
    use crate::math::ls_slope;
    use crate::space::{generate_space, SpaceSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn line(step: f64) -> FiniteMetricMeasureSpace {
        generate_space(&SpaceSpec::grid_1d(0.0, 1.0, step)).unwrap()
    }

    fn plane(step: f64) -> FiniteMetricMeasureSpace {
        generate_space(&SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step }).unwrap()
    }

    #[test]
    fn residual_examples() {
        let s = line(1.0 / 64.0);
        let chart = Chart::ambient(&s).unwrap();
        let scales = geometric_scales(0.25, 4);
        let lin = ScalarField::from_coords(&s, |c| 3.0 * c[0]).unwrap();
        let p = residual_profile(&s, &lin, &chart, &[3.0], 32, &scales).unwrap();
        assert!(p.residuals.iter().all(|&v| v < 1e-12));
        assert!(p.differentiable);

        let sq = ScalarField::from_coords(&s, |c| c[0] * c[0]).unwrap();
        let x = 32;
        let p = residual_profile(&s, &sq, &chart, &[1.0], x, &scales).unwrap();
        for (r, v) in p.scales.iter().zip(&p.residuals) {
            // |y² − x² − 2x(y − x)| = (y − x)² ≤ r², divided by r.
            assert_abs_diff_eq!(*v, *r, epsilon = 1e-12);
        }
        assert!(p.differentiable);

        let p = residual_profile(&s, &lin, &chart, &[0.0], x, &scales).unwrap();
        assert!(p.residuals.iter().all(|&v| (v - 3.0).abs() < 1e-9));
        assert!(!p.differentiable);
    }

    #[test]
    fn differential_examples() {
        let s = plane(1.0 / 32.0);
        let chart = Chart::ambient(&s).unwrap();
        let lin = ScalarField::from_coords(&s, |c| 2.0 * c[0] - c[1]).unwrap();
        let df = estimate_differential(&s, &lin, &chart, 100, 0.1).unwrap();
        assert_abs_diff_eq!(df[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(df[1], -1.0, epsilon = 1e-12);

        let smooth = ScalarField::from_coords(&s, |c| c[0] * c[0] + c[0] * c[1]).unwrap();
        let coords = s.coords().unwrap();
        for x in [0, 100, 500] {
            let df = estimate_differential(&s, &smooth, &chart, x, 0.1).unwrap();
            let (a, b) = (coords[x][0], coords[x][1]);
            assert!(dist(&df, &[2.0 * a + b, a]) <= 2.0 * 0.1);
        }

        let dup = Chart::new(&s, vec![100], vec![ScalarField::coordinate(&s, 0).unwrap(), ScalarField::coordinate(&s, 0).unwrap()]).unwrap();
        match estimate_differential(&s, &lin, &dup, 100, 0.1) {
            Err(Error::RankDeficient { direction }) => {
                let want = 1.0 / sqrt(2.0);
                assert_abs_diff_eq!(direction[0].abs(), want, epsilon = 1e-9);
                assert_abs_diff_eq!(direction[0] + direction[1], 0.0, epsilon = 1e-9);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn differential_error_is_first_order() {
        let s = plane(0.02);
        let chart = Chart::ambient(&s).unwrap();
        let f = ScalarField::from_coords(&s, |c| c[0] * c[0] + c[0] * c[1]).unwrap();
        let coords = s.coords().unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in [0.32, 0.16, 0.08, 0.04] {
            let field = estimate_differential_field(&s, &f, &chart, r).unwrap();
            let err = field
                .values
                .iter()
                .map(|(x, df)| dist(df, &[2.0 * coords[*x][0] + coords[*x][1], coords[*x][0]]))
                .fold(0.0, f64::max);
            xs.push(ln(r));
            ys.push(ln(err));
        }
        let slope = ls_slope(&xs, &ys);
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    }

    #[test]
    fn lipderiv_examples() {
        // x² has K̂ > 1.5 only for x < 2.5h, i.e. at 3 of 513 points.
        let h = 1.0 / 512.0;
        let s = line(h);
        let d = build_stencil(&s, &Scheme::CoordinateAxis { axis: 0 }, h).unwrap();
        let fam = [
            ScalarField::coordinate(&s, 0).unwrap(),
            ScalarField::from_coords(&s, |c| 2.0 * c[0]).unwrap(),
            ScalarField::from_coords(&s, |c| c[0] * c[0]).unwrap(),
        ];
        let scales = geometric_scales(4.0 * h, 3);
        let r = lipderiv_check(&s, &fam, core::slice::from_ref(&d), &scales, 1.5).unwrap();
        assert!(r.fraction_within >= 0.99);
        assert!(r.k_hat[256] <= 1.0 + 8.0 * h);
        assert!(r.k_hat[0] > 1.5);

        let c = [ScalarField::constant(s.len(), 1.0)];
        let r = lipderiv_check(&s, &c, core::slice::from_ref(&d), &scales, 1.0).unwrap();
        assert!(r.k_hat.iter().all(|&k| k == 1.0));

        // Period-2 sawtooth: invisible to a stencil of step 2h, visible to Lip̂.
        let d2 = build_stencil(&s, &Scheme::CoordinateAxis { axis: 0 }, 2.0 * h).unwrap();
        let saw = [ScalarField::from_fn(s.len(), |i| if i % 2 == 0 { 0.0 } else { h }).unwrap()];
        let r = lipderiv_check(&s, &saw, core::slice::from_ref(&d2), &scales, 1.5).unwrap();
        assert_eq!(r.k_hat[100], f64::INFINITY);
    }

    #[test]
    fn chart_constant_examples() {
        let s = plane(1.0 / 16.0);
        let chart = Chart::ambient(&s).unwrap();
        let scales = [0.25, 0.125];
        let k = chart_lower_constant(&s, &chart, 8 * 17 + 8, &scales, 0).unwrap();
        assert!(k.samples >= 200);
        assert!(k.k_hat <= 1.0 + 1e-12 && k.k_hat >= 1.0 / 2f64.sqrt());
        assert!(!k.degenerate);

        let dep = Chart::new(
            &s,
            (0..s.len()).collect(),
            vec![ScalarField::coordinate(&s, 0).unwrap(), ScalarField::from_coords(&s, |c| 2.0 * c[0]).unwrap()],
        )
        .unwrap();
        let k = chart_lower_constant(&s, &dep, 100, &scales, 0).unwrap();
        assert!(k.degenerate);
        let want = [2.0 / sqrt(5.0), -1.0 / sqrt(5.0)];
        let sign = if k.direction[0] < 0.0 { -1.0 } else { 1.0 };
        assert_abs_diff_eq!(sign * k.direction[0], want[0], epsilon = 1e-9);
        assert_abs_diff_eq!(sign * k.direction[1], want[1], epsilon = 1e-9);

        let l = line(0.125);
        let k = chart_lower_constant(&l, &Chart::ambient(&l).unwrap(), 4, &[0.25, 0.125], 0).unwrap();
        assert_eq!(k.k_hat, 1.0);
    }

    #[test]
    fn sphere_samples_are_unit() {
        for n in 1..6 {
            let s = sphere_samples(n, 0);
            assert!(s.len() >= 100 * n || n == 1);
            for v in s {
                assert_abs_diff_eq!(norm(&v), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn subchart_examples() {
        let parts = subchart_partition(&[(0, 0.6)]);
        assert_eq!(parts, vec![Subchart { k: 0, points: vec![0], constant: 2.0 }]);
        let parts = subchart_partition(&[(0, 0.6), (1, 0.3), (2, 0.2), (3, 0.5), (4, 1.0)]);
        let ks: Vec<(i32, Vec<usize>)> = parts.iter().map(|p| (p.k, p.points.clone())).collect();
        assert_eq!(ks, vec![(-1, vec![4]), (0, vec![0, 3]), (1, vec![1]), (2, vec![2])]);
        assert!(subchart_partition(&[]).is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn residual_is_a_seminorm(a in proptest::collection::vec(-2.0f64..2.0, 17), b in proptest::collection::vec(-2.0f64..2.0, 17), t in -3.0f64..3.0, x in 0usize..17) {
            let s = line(1.0 / 16.0);
            let chart = Chart::ambient(&s).unwrap();
            let f = ScalarField::new(a).unwrap();
            let g = ScalarField::new(b).unwrap();
            let scales = [0.25, 0.125, 0.0625];
            let (df, dg) = ([0.7], [-0.2]);
            let pf = residual_profile(&s, &f, &chart, &df, x, &scales).unwrap();
            let pg = residual_profile(&s, &g, &chart, &dg, x, &scales).unwrap();
            let sum = f.zip_with(&g, |u, v| u + v);
            let ps = residual_profile(&s, &sum, &chart, &[0.5], x, &scales).unwrap();
            let pt = residual_profile(&s, &f.map(|u| t * u), &chart, &[t * 0.7], x, &scales).unwrap();
            for k in 0..pf.residuals.len() {
                prop_assert!(ps.residuals[k] <= (pf.residuals[k] + pg.residuals[k]) * (1.0 + 1e-12) + 1e-12);
                prop_assert!((pt.residuals[k] - t.abs() * pf.residuals[k]).abs() <= 1e-9 * (1.0 + pf.residuals[k]));
            }
        }

        #[test]
        fn upper_bound_chain(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, q in -1.0f64..1.0, x in 0usize..289) {
            let s = plane(1.0 / 16.0);
            let chart = Chart::ambient(&s).unwrap();
            let f = ScalarField::from_coords(&s, |p| c0 * p[0] + c1 * p[1] + q * p[0] * p[1]).unwrap();
            let scales = [0.25, 0.125, 0.0625];
            let df = estimate_differential(&s, &f, &chart, x, 0.125).unwrap();
            let res = residual_profile(&s, &f, &chart, &df, x, &scales).unwrap();
            let lip = pointwise_lip_profile(&s, &f, x, &scales).unwrap().upper;
            let max_res = res.residuals.iter().copied().fold(0.0, f64::max);
            prop_assert!(lip <= (sqrt(2.0) * chart.lip * norm(&df) + max_res) * (1.0 + 1e-12) + 1e-15);
            // Lower bound in the direction of Df, as in the chart-constant argument.
            let nd = norm(&df);
            if nd > 0.0 {
                let dir: Vec<f64> = df.iter().map(|v| v / nd).collect();
                let kc = directional_lip(&s, &chart, x, &dir, &scales).unwrap();
                prop_assert!(nd * kc <= (lip + max_res) * (1.0 + 1e-12) + 1e-15);
            }
        }

        #[test]
        fn coordinate_stencils_give_unique_differentials(c0 in -2.0f64..2.0, c1 in -2.0f64..2.0, x in 0usize..289) {
            let s = plane(1.0 / 16.0);
            let chart = Chart::ambient(&s).unwrap();
            let f = ScalarField::from_coords(&s, |p| c0 * p[0] + c1 * p[1]).unwrap();
            let scales = [0.25, 0.125];
            let d = build_stencils(&s, &[Scheme::CoordinateAxis { axis: 0 }, Scheme::CoordinateAxis { axis: 1 }], 1.0 / 16.0).unwrap();
            let from_stencils = [d[0].apply(&f).unwrap().get(x), d[1].apply(&f).unwrap().get(x)];
            let from_ls = estimate_differential(&s, &f, &chart, x, 0.125).unwrap();
            let tau = 1e-9;
            let p1 = residual_profile(&s, &f, &chart, &from_stencils, x, &scales).unwrap();
            let p2 = residual_profile(&s, &f, &chart, &from_ls, x, &scales).unwrap();
            prop_assert!(p1.residuals.iter().chain(&p2.residuals).all(|&r| r <= tau));
            let k = chart_lower_constant(&s, &chart, x, &scales, 0).unwrap();
            prop_assert!(differential_gap(&from_stencils, &from_ls) <= 2.0 * tau / k.k_hat);
        }
    }
}
