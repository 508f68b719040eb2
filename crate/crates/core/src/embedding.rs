//! Assouad-type snowflake embeddings `ζ: (X, d^s) → ℝⁿ`, distortion audits and
//! the composite approximation `ũ_ε`.
//!
//! Construction: for dyadic scales `ε_k = 2^{-k}` take a greedy ε_k-net,
//! color it so that equal colors are more than `ρ ε_k` apart (`ρ = 12`), and
//! sum tents `max(0, 1 − d(·, p)/(2ε_k))` per color. The layer for scale `k`
//! and color `c` is added, weighted by `ε_k^s`, to coordinate
//! `(c, k mod B)`. The block length `B` is the least integer with
//! `I = 4q₁/(1−q₁) + q₂/(1−q₂) < 1/4`, `q₁ = 2^{−B(1−s)}`, `q₂ = 2^{−Bs}`.
//!
//! For a pair at distance `d` pick the scale with `4ε ≤ d < 8ε`. The tent of
//! the net point nearest `x` exceeds 1/2 at `x` and vanishes at `y`, and no
//! other tent of that color reaches `y`. Scales sharing the coordinate
//! perturb the difference by at most `I ε^s`, so
//! `|ζ(x) − ζ(y)| ≥ (1/2 − I) 8^{−s} d^s`. The upper bound sums
//! `ε_k^s min(1, d/(2ε_k))` over scales, with at most `2A` active colors per
//! scale, where `A` is the largest number of tents positive at one point.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::ScalarField;
use crate::lipschitz::{global_lip, inf_convolution, lip_on_subset};
use crate::math::{ceil, dist, log2, powf, powi, sqrt};
use crate::nets::{build_net, EpsilonNet, NetStrategy};
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

pub const SEPARATION_FACTOR: f64 = 12.0;
/// Above this many points the distortion audit samples pairs.
pub const EXHAUSTIVE_AUDIT_LIMIT: usize = 2000;
pub const SAMPLED_PAIRS: usize = 1_000_000;

/// Greedy coloring of net points: equal colors are more than `ρ ε` apart.
pub fn net_coloring(space: &FiniteMetricMeasureSpace, net: &EpsilonNet, rho: f64) -> Result<Vec<usize>> {
    if !(rho >= 1.0) {
        return Err(Error::invalid("separation factor must be at least 1"));
    }
    let limit = rho * net.epsilon;
    let mut colors: Vec<usize> = Vec::with_capacity(net.points.len());
    for (a, &p) in net.points.iter().enumerate() {
        let mut taken: Vec<usize> = (0..a).filter(|&b| space.dist(p, net.points[b]) <= limit).map(|b| colors[b]).collect();
        taken.sort_unstable();
        taken.dedup();
        let c = (0..).find(|c| taken.binary_search(c).is_err()).unwrap();
        colors.push(c);
    }
    Ok(colors)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionAudit {
    /// `min |ζ(y) − ζ(x)| / d(x,y)^s`.
    pub k_low: f64,
    /// `max |ζ(y) − ζ(x)| / d(x,y)^s`.
    pub k_up: f64,
    pub argmin: (usize, usize),
    pub argmax: (usize, usize),
    pub pairs: usize,
    pub sampled: bool,
}

impl DistortionAudit {
    pub fn ratio(&self) -> f64 {
        crate::math::ratio_or_one(self.k_up, self.k_low)
    }
}

pub fn distortion_audit(space: &FiniteMetricMeasureSpace, images: &[Vec<f64>], s: f64, seed: u64) -> Result<DistortionAudit> {
    if images.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), got: images.len() });
    }
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::invalid("snowflake exponent must lie in (0, 1]"));
    }
    let n = space.len();
    let mut audit = DistortionAudit { k_low: f64::INFINITY, k_up: 0.0, argmin: (0, 0), argmax: (0, 0), pairs: 0, sampled: false };
    let visit = |i: usize, j: usize, a: &mut DistortionAudit| {
        let r = dist(&images[i], &images[j]) / powf(space.dist(i, j), s);
        a.pairs += 1;
        if r < a.k_low {
            a.k_low = r;
            a.argmin = (i, j);
        }
        if r > a.k_up {
            a.k_up = r;
            a.argmax = (i, j);
        }
    };
    if n <= EXHAUSTIVE_AUDIT_LIMIT {
        for i in 0..n {
            for j in i + 1..n {
                visit(i, j, &mut audit);
            }
        }
    } else {
        audit.sampled = true;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while audit.pairs < SAMPLED_PAIRS {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j {
                visit(i.min(j), i.max(j), &mut audit);
            }
        }
    }
    if audit.pairs == 0 {
        audit.k_low = 1.0;
        audit.k_up = 1.0;
    }
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub dim: usize,
    pub s: f64,
    pub images: Vec<Vec<f64>>,
    pub k_low: f64,
    pub k_up: f64,
    pub scales: Vec<f64>,
    /// Largest color count over the scales.
    pub colors: usize,
    /// Block length `B`.
    pub block: usize,
    /// Max number of tents positive at a single point.
    pub tent_overlap: usize,
    /// Lower constant guaranteed by the construction.
    pub certified_low: f64,
    /// Upper constant guaranteed by the construction.
    pub certified_up: f64,
    /// The scale band reaches every pairwise distance, so the certificates apply.
    pub covers_all_pairs: bool,
    pub audit: DistortionAudit,
}

impl EmbeddingResult {
    pub fn distortion(&self) -> f64 {
        self.audit.ratio()
    }

    pub fn certified_distortion(&self) -> f64 {
        self.certified_up / self.certified_low
    }

    /// Two-sided constant `K = max(K_up, 1/K_low)`.
    pub fn two_sided_constant(&self) -> f64 {
        self.k_up.max(1.0 / self.k_low)
    }
}

fn interference(block: usize, s: f64) -> f64 {
    let q1 = powf(2.0, -(block as f64) * (1.0 - s));
    let q2 = powf(2.0, -(block as f64) * s);
    4.0 * q1 / (1.0 - q1) + q2 / (1.0 - q2)
}

pub fn block_length(s: f64) -> usize {
    (1..).find(|&b| interference(b, s) < 0.25).unwrap()
}

/// Dyadic exponents `k` with `ε_k = 2^{-k}` spanning `(min_d/8, diam/4]`.
fn scale_band(min_d: f64, diam: f64) -> (i32, i32) {
    (ceil(log2(4.0 / diam)) as i32, ceil(log2(4.0 / min_d)) as i32)
}

pub fn assouad_embed(space: &FiniteMetricMeasureSpace, s: f64, scale_count: Option<usize>, seed: u64) -> Result<EmbeddingResult> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid("snowflake exponent must lie in (0, 1)"));
    }
    let n = space.len();
    if n == 0 {
        return Err(Error::EmptySubset);
    }
    let block = block_length(s);
    if n == 1 {
        let audit = distortion_audit(space, &[vec![0.0]], s, seed)?;
        return Ok(EmbeddingResult {
            dim: 1,
            s,
            images: vec![vec![0.0]],
            k_low: 1.0,
            k_up: 1.0,
            scales: Vec::new(),
            colors: 1,
            block,
            tent_overlap: 1,
            certified_low: 1.0,
            certified_up: 1.0,
            covers_all_pairs: true,
            audit,
        });
    }
    let (k_lo, k_hi) = scale_band(space.min_distance(), space.diameter());
    let full = (k_hi - k_lo + 1) as usize;
    let count = scale_count.unwrap_or(full).max(1);
    let mut layers: Vec<(i32, f64, Vec<Vec<(usize, f64)>>)> = Vec::with_capacity(count);
    let mut colors = 1;
    let mut tent_overlap = 1;
    for step in 0..count {
        let k = k_lo + step as i32;
        let eps = powi(2.0, -k);
        let net = build_net(space, eps, NetStrategy::GreedyScan, seed)?;
        let color = net_coloring(space, &net, SEPARATION_FACTOR)?;
        colors = colors.max(color.iter().max().unwrap() + 1);
        // Per point, (color, tent value) for every positive tent.
        let mut values = vec![Vec::new(); n];
        for (x, v) in values.iter_mut().enumerate() {
            for (a, &p) in net.points.iter().enumerate() {
                let g = 1.0 - space.dist(x, p) / (2.0 * eps);
                if g > 0.0 {
                    v.push((color[a], g));
                }
            }
            tent_overlap = tent_overlap.max(v.len());
        }
        layers.push((k, eps, values));
    }
    let dim = colors * block;
    let mut images = vec![vec![0.0; dim]; n];
    for (k, eps, values) in &layers {
        let w = powf(*eps, s);
        let b = k.rem_euclid(block as i32) as usize;
        for (x, v) in values.iter().enumerate() {
            for &(c, g) in v {
                images[x][c * block + b] += w * g;
            }
        }
    }
    let audit = distortion_audit(space, &images, s, seed)?;
    let certified_low = (0.5 - interference(block, s)) / powf(8.0, s);
    let certified_up = sqrt(2.0 * tent_overlap as f64)
        * powf(2.0, -s)
        * (1.0 / (1.0 - powf(2.0, s - 1.0)) + 1.0 / (1.0 - powf(2.0, -s)));
    Ok(EmbeddingResult {
        dim,
        s,
        images,
        k_low: audit.k_low,
        k_up: audit.k_up,
        scales: layers.iter().map(|l| l.1).collect(),
        colors,
        block,
        tent_overlap,
        certified_low,
        certified_up,
        covers_all_pairs: count >= full,
        audit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeApproximation {
    pub epsilon: f64,
    pub field: ScalarField,
    /// `L(ũ_ε)` after McShane extension.
    pub lip: f64,
    pub lip_u: f64,
    /// `L(u) K^{1/s} (2ε)^{1−s} · √n K ε^{s−1}` with `K = max(K_up, 1/K_low)`.
    pub k_prime: f64,
    /// `L(u) + K′`.
    pub bound: f64,
    /// `2 L(u) + K′`, which also covers pairs straddling the annulus.
    pub safe_bound: f64,
    pub sup_error: f64,
    pub within_bound: bool,
    /// Lipschitz constant of `[u ∘ ζ⁻¹]_{B_ε} ∘ [ζ]_ε` on `B_ε`.
    pub lip_inner: f64,
}

pub fn composite_approximation(
    space: &FiniteMetricMeasureSpace,
    u: &ScalarField,
    emb: &EmbeddingResult,
    eps: f64,
    x0: usize,
) -> Result<CompositeApproximation> {
    u.check_len(space)?;
    space.check_point(x0)?;
    if emb.images.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), got: emb.images.len() });
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid("ε must be positive"));
    }
    let n = space.len();
    let net = build_net(space, eps, NetStrategy::GreedyScan, x0 as u64)?;
    let ball = space.ball(x0, eps)?;
    if ball.is_empty() {
        return Err(Error::EmptySubset);
    }
    let dim = emb.dim;
    // [ζ]_ε, componentwise on the net.
    let mut approx_zeta = vec![vec![0.0; dim]; n];
    for i in 0..dim {
        let comp: Vec<f64> = emb.images.iter().map(|z| z[i]).collect();
        let li = lip_on_subset(space, &comp, &net.points);
        let ext = inf_convolution(space, &comp, &net.points, li);
        for x in 0..n {
            approx_zeta[x][i] = ext.get(x);
        }
    }
    // [u ∘ ζ⁻¹] on ζ(B_ε ∩ net), extended over ℝⁿ by inf-convolution.
    let centers: Vec<usize> = net.points.iter().copied().filter(|p| ball.binary_search(p).is_ok()).collect();
    let mut lip_v = 0.0f64;
    for (a, &p) in centers.iter().enumerate() {
        for &q in &centers[a + 1..] {
            lip_v = lip_v.max((u.get(p) - u.get(q)).abs() / dist(&emb.images[p], &emb.images[q]));
        }
    }
    let inner = |z: &[f64]| -> f64 {
        let mut best = f64::INFINITY;
        for &p in &centers {
            let dz = dist(z, &emb.images[p]);
            if dz == 0.0 {
                return u.get(p);
            }
            best = best.min(u.get(p) + lip_v * dz);
        }
        best
    };
    let outside = |x: usize| space.dist(x0, x) > 2.0 * eps;
    let mut partial: Vec<(usize, f64)> = Vec::new();
    let mut inner_vals = Vec::with_capacity(ball.len());
    for x in 0..n {
        if ball.binary_search(&x).is_ok() {
            let v = inner(&approx_zeta[x]);
            inner_vals.push(v);
            partial.push((x, v));
        } else if outside(x) {
            partial.push((x, u.get(x)));
        }
    }
    let mut vals_full = vec![0.0; n];
    for &(x, v) in &partial {
        vals_full[x] = v;
    }
    let lip_inner = lip_on_subset(space, &vals_full, &ball);
    let field = crate::lipschitz::mcshane_extend(space, &partial)?;
    let lip = global_lip(space, &field)?;
    let lip_u = global_lip(space, u)?;
    let k = emb.two_sided_constant();
    let s = emb.s;
    let k_prime = lip_u * powf(k, 1.0 / s) * powf(2.0 * eps, 1.0 - s) * sqrt(dim as f64) * k * powf(eps, s - 1.0);
    let bound = lip_u + k_prime;
    let sup_error = field.sup_distance(u);
    Ok(CompositeApproximation {
        epsilon: eps,
        field,
        lip,
        lip_u,
        k_prime,
        bound,
        safe_bound: 2.0 * lip_u + k_prime,
        sup_error,
        within_bound: lip <= bound,
        lip_inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{generate_space, SpaceSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn path(n: usize) -> FiniteMetricMeasureSpace {
        generate_space(&SpaceSpec::PathGraph { n, edge: 1.0 }).unwrap()
    }

    #[test]
    fn coloring_examples() {
        let s = path(10);
        let net = build_net(&s, 1.0, NetStrategy::GreedyScan, 0).unwrap();
        let c = net_coloring(&s, &net, 2.5).unwrap();
        assert_eq!(c, vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0]);
        let far = build_net(&s, 1.0, NetStrategy::GreedyScan, 0).unwrap();
        assert!(net_coloring(&s, &far, 0.5).is_err());
        let single = build_net(&path(1), 1.0, NetStrategy::GreedyScan, 0).unwrap();
        assert_eq!(net_coloring(&path(1), &single, 3.0).unwrap(), vec![0]);
        let sparse = FiniteMetricMeasureSpace::from_points(vec![vec![0.0], vec![10.0], vec![20.0]], None).unwrap();
        let net = build_net(&sparse, 1.0, NetStrategy::GreedyScan, 0).unwrap();
        assert_eq!(net_coloring(&sparse, &net, 2.0).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn audit_examples() {
        let s = generate_space(&SpaceSpec::grid_1d(0.0, 1.0, 0.125)).unwrap();
        let id: Vec<Vec<f64>> = s.coords().unwrap().to_vec();
        let a = distortion_audit(&s, &id, 1.0, 0).unwrap();
        assert_eq!((a.k_low, a.k_up), (1.0, 1.0));
        let flat = vec![vec![2.0]; s.len()];
        let a = distortion_audit(&s, &flat, 1.0, 0).unwrap();
        assert_eq!(a.k_low, 0.0);
        assert_eq!(a.argmin, (0, 1));
        let tripled: Vec<Vec<f64>> = id.iter().map(|v| vec![3.0 * v[0]]).collect();
        let b = distortion_audit(&s, &tripled, 0.5, 0).unwrap();
        let c = distortion_audit(&s, &id, 0.5, 0).unwrap();
        assert_abs_diff_eq!(b.k_low, 3.0 * c.k_low, epsilon = 1e-12);
        assert_abs_diff_eq!(b.k_up, 3.0 * c.k_up, epsilon = 1e-12);
    }

    #[test]
    fn block_lengths() {
        assert_eq!(block_length(0.5), 9);
        for s in [0.2, 0.5, 0.8] {
            let b = block_length(s);
            assert!(interference(b, s) < 0.25);
            assert!(b == 1 || interference(b - 1, s) >= 0.25);
        }
    }

    #[test]
    fn two_points() {
        let s = path(2);
        let e = assouad_embed(&s, 0.5, None, 0).unwrap();
        assert_eq!(e.distortion(), 1.0);
        assert!(e.k_low > 0.0);
    }

    #[test]
    fn path_of_sixteen() {
        let s = path(16);
        let e = assouad_embed(&s, 0.5, None, 0).unwrap();
        assert!(e.k_low > 0.0 && e.k_up.is_finite());
        assert!(e.k_low >= e.certified_low);
        assert!(e.k_up <= e.certified_up);
        assert!(e.distortion() <= e.certified_distortion());
        let again = assouad_embed(&s, 0.5, None, 0).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn cantor_distortion_is_stable_across_depths() {
        let r: Vec<f64> = [6, 7]
            .iter()
            .map(|&d| {
                let s = generate_space(&SpaceSpec::middle_thirds(d)).unwrap();
                let e = assouad_embed(&s, 0.5, None, 0).unwrap();
                assert!(e.k_low >= e.certified_low && e.k_up <= e.certified_up);
                e.distortion()
            })
            .collect();
        assert!((r[1] / r[0] - 1.0).abs() <= 0.1, "{r:?}");
    }

    #[test]
    fn composite_examples() {
        let s = path(64);
        let e = assouad_embed(&s, 0.5, None, 0).unwrap();
        let c = ScalarField::constant(64, 1.5);
        let r = composite_approximation(&s, &c, &e, 4.0, 10).unwrap();
        assert_eq!(r.field, c);
        let u = ScalarField::coordinate(&s, 0).unwrap();
        let r = composite_approximation(&s, &u, &e, 100.0, 10).unwrap();
        assert!(r.within_bound);
        let r = composite_approximation(&s, &u, &e, 4.0, 10).unwrap();
        assert!(r.within_bound, "{} > {}", r.lip, r.bound);
        assert!(r.lip <= r.safe_bound);
        assert_eq!(r.field.get(10), u.get(10));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn certificates_hold(seed in 0u64..1000, s in 0.3f64..0.8) {
            let sp = generate_space(&SpaceSpec::RandomPoints { n: 40, dim: 2, seed }).unwrap();
            let e = assouad_embed(&sp, s, None, seed).unwrap();
            prop_assert!(e.k_low > 0.0);
            prop_assert!(e.k_low >= e.certified_low);
            prop_assert!(e.k_up <= e.certified_up);
        }
    }
}
