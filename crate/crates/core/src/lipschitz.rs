//! Global and pointwise Lipschitz constants, McShane extension, weak-*
//! convergence checks and polynomial chain-rule bounds.
//!
//! On a finite space the limits `r → 0` in `Lip[f](x)` and `lip[f](x)` are
//! replaced by the max and min over a user supplied scale grid.

use alloc::vec;
use alloc::vec::Vec;

use crate::field::{Polynomial, ScalarField};
use crate::math::ratio_or_one;
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

/// `L(f) = max_{x≠y} |f(y) − f(x)| / d(x, y)`; 0 on a single point.
pub fn global_lip(space: &FiniteMetricMeasureSpace, f: &ScalarField) -> Result<f64> {
    f.check_len(space)?;
    Ok(lip_on_subset(space, f.values(), &(0..space.len()).collect::<Vec<_>>()))
}

/// Lipschitz constant of `values` restricted to `subset` (values indexed by point).
pub(crate) fn lip_on_subset(space: &FiniteMetricMeasureSpace, values: &[f64], subset: &[usize]) -> f64 {
    let mut best = 0.0f64;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            let s = (values[j] - values[i]).abs() / space.dist(i, j);
            if s > best {
                best = s;
            }
        }
    }
    best
}

/// Geometric scale grid `r₀, r₀/2, …, r₀/2^{count−1}`.
pub fn geometric_scales(r0: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| r0 / (1u64 << j) as f64).collect()
}

/// Per-scale slopes `sup_{y ∈ B̄(x,r)} |f(y) − f(x)| / r` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct LipProfile {
    pub point: usize,
    /// Scales actually used, descending.
    pub scales: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Max slope over the scales, standing in for `Lip[f](x)`.
    pub upper: f64,
    /// Min slope over the scales, standing in for `lip[f](x)`.
    pub lower: f64,
    /// Requested scales below the nearest-neighbor distance of the point.
    pub dropped: Vec<f64>,
}

pub fn pointwise_lip_profile(
    space: &FiniteMetricMeasureSpace,
    f: &ScalarField,
    x: usize,
    scales: &[f64],
) -> Result<LipProfile> {
    f.check_len(space)?;
    space.check_point(x)?;
    let (used, dropped) = usable_scales(space, x, scales)?;
    let sup = ball_sups(space, x, &used, |y| (f.get(y) - f.get(x)).abs());
    let slopes: Vec<f64> = sup.iter().zip(&used).map(|(s, r)| s / r).collect();
    let upper = slopes.iter().copied().fold(0.0, f64::max);
    let lower = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LipProfile { point: x, scales: used, slopes, upper, lower, dropped })
}

/// Splits the requested scales into usable ones (descending) and those below
/// the resolution at `x`.
pub(crate) fn usable_scales(space: &FiniteMetricMeasureSpace, x: usize, scales: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scales.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("scales must be positive and finite"));
    }
    let nn = space.nearest_neighbor_distance(x);
    let mut sorted = scales.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    let (used, dropped): (Vec<f64>, Vec<f64>) = if nn.is_finite() {
        sorted.into_iter().partition(|&r| r >= nn)
    } else {
        // A single point: every ball is {x} and every slope is 0.
        (sorted, Vec::new())
    };
    if used.is_empty() {
        return Err(Error::NoUsableScales);
    }
    Ok((used, dropped))
}

/// For each radius, `max_{y ∈ B̄(x,r)} value(y)` with `value ≥ 0`.
pub(crate) fn ball_sups(
    space: &FiniteMetricMeasureSpace,
    x: usize,
    radii_desc: &[f64],
    value: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let mut sup = vec![0.0f64; radii_desc.len()];
    for y in 0..space.len() {
        let d = space.dist(x, y);
        if d > radii_desc[0] {
            continue;
        }
        let v = value(y);
        for (s, &r) in sup.iter_mut().zip(radii_desc) {
            if d > r {
                break;
            }
            if v > *s {
                *s = v;
            }
        }
    }
    sup
}

/// `Lip̂[f](x) / lip̂[f](x)` with `0/0 = 1` and `positive/0 = ∞`.
pub fn liplip_ratio(space: &FiniteMetricMeasureSpace, f: &ScalarField, x: usize, scales: &[f64]) -> Result<f64> {
    let p = pointwise_lip_profile(space, f, x, scales)?;
    Ok(ratio_or_one(p.upper, p.lower))
}

/// McShane extension `x ↦ min_{a∈A} f(a) + L · d(x, a)` with `L = L(f|_A)`.
/// Values on `A` are kept exactly.
pub fn mcshane_extend(space: &FiniteMetricMeasureSpace, subset: &[(usize, f64)]) -> Result<ScalarField> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut values = vec![f64::NAN; space.len()];
    let mut idx = Vec::with_capacity(subset.len());
    for &(a, v) in subset {
        space.check_point(a)?;
        if !v.is_finite() {
            return Err(Error::invalid("non-finite value on the subset"));
        }
        if !values[a].is_nan() {
            return Err(Error::invalid("point listed twice in the subset"));
        }
        values[a] = v;
        idx.push(a);
    }
    let lip = lip_on_subset(space, &values, &idx);
    Ok(inf_convolution(space, &values, &idx, lip))
}

/// `x ↦ min_{a ∈ centers} values[a] + lip · d(x, a)`, exact on `centers`.
pub(crate) fn inf_convolution(space: &FiniteMetricMeasureSpace, values: &[f64], centers: &[usize], lip: f64) -> ScalarField {
    let mut out = vec![f64::INFINITY; space.len()];
    for (x, o) in out.iter_mut().enumerate() {
        for &a in centers {
            let v = values[a] + lip * space.dist(x, a);
            if v < *o {
                *o = v;
            }
        }
    }
    for &a in centers {
        out[a] = values[a];
    }
    ScalarField::new(out).expect("finite inputs give finite extension")
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakStarVerdict {
    pub converges: bool,
    /// Sup-distance of each element to the candidate limit.
    pub deviations: Vec<f64>,
    /// Deviation of the last element.
    pub tail_deviation: f64,
    /// `sup_m L(f_m)`.
    pub sup_lip: f64,
}

/// Default pointwise tolerance for [`weakstar_check`].
pub const WEAKSTAR_TOL: f64 = 1e-8;

/// On a separable space weak-* convergence in `Lip_b` is pointwise
/// convergence with a uniform Lipschitz bound; this checks both on a finite
/// sequence.
pub fn weakstar_check(
    space: &FiniteMetricMeasureSpace,
    sequence: &[ScalarField],
    limit: &ScalarField,
    lip_budget: f64,
    tol: f64,
) -> Result<WeakStarVerdict> {
    if sequence.is_empty() {
        return Err(Error::invalid("sequence is empty"));
    }
    limit.check_len(space)?;
    let mut deviations = Vec::with_capacity(sequence.len());
    let mut sup_lip = 0.0f64;
    for f in sequence {
        f.check_len(space)?;
        deviations.push(f.sup_distance(limit));
        sup_lip = sup_lip.max(global_lip(space, f)?);
    }
    let tail_deviation = *deviations.last().unwrap();
    Ok(WeakStarVerdict { converges: tail_deviation <= tol && sup_lip <= lip_budget, deviations, tail_deviation, sup_lip })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRuleReport {
    /// `Lip̂[p ∘ f](x)`.
    pub composite_lip: f64,
    /// `Σᵢ |∂ᵢp(f(x))| · maxᵢ Lip̂[fᵢ](x)`.
    pub bound: f64,
    /// Composite exceeds the bound by more than 10%.
    pub violation: bool,
}

/// Compares `Lip̂[p ∘ f](x)` with the first-order chain-rule bound. When every
/// `Lip̂[fᵢ](x)` vanishes the bound is 0 and so must the composite be.
pub fn poly_chain_rule_check(
    space: &FiniteMetricMeasureSpace,
    fields: &[ScalarField],
    x: usize,
    p: &Polynomial,
    scales: &[f64],
) -> Result<ChainRuleReport> {
    let composite = p.compose(fields)?;
    let composite_lip = pointwise_lip_profile(space, &composite, x, scales)?.upper;
    let mut max_lip = 0.0f64;
    for f in fields {
        max_lip = max_lip.max(pointwise_lip_profile(space, f, x, scales)?.upper);
    }
    let at: Vec<f64> = fields.iter().map(|f| f.get(x)).collect();
    let c: f64 = p.gradient(&at).iter().map(|g| g.abs()).sum();
    let bound = c * max_lip;
    Ok(ChainRuleReport { composite_lip, bound, violation: composite_lip > 1.1 * bound + 1e-12 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Monomial;
    use crate::space::{generate_space, SpaceSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid(step: f64) -> FiniteMetricMeasureSpace {
        generate_space(&SpaceSpec::grid_1d(0.0, 1.0, step)).unwrap()
    }

    #[test]
    fn global_lip_examples() {
        let s = grid(0.1);
        assert_eq!(global_lip(&s, &ScalarField::constant(s.len(), 2.0)).unwrap(), 0.0);
        let id = ScalarField::coordinate(&s, 0).unwrap();
        assert_abs_diff_eq!(global_lip(&s, &id).unwrap(), 1.0, epsilon = 1e-12);
        let sq = ScalarField::from_coords(&s, |c| c[0] * c[0]).unwrap();
        // Pair enumeration: the steepest chord is (0.9, 1.0) with slope 1.9.
        let mut best = (0.0, 0, 0);
        for i in 0..11 {
            for j in i + 1..11 {
                let (a, b) = (i as f64 / 10.0, j as f64 / 10.0);
                let slope = (b * b - a * a) / (b - a);
                if slope > best.0 {
                    best = (slope, i, j);
                }
            }
        }
        assert_eq!((best.1, best.2), (9, 10));
        assert_abs_diff_eq!(global_lip(&s, &sq).unwrap(), best.0, epsilon = 1e-12);
        assert_abs_diff_eq!(best.0, 1.9, epsilon = 1e-12);
    }

    #[test]
    fn single_point_has_zero_lipschitz_constant() {
        let s = generate_space(&SpaceSpec::PathGraph { n: 1, edge: 1.0 }).unwrap();
        assert_eq!(global_lip(&s, &ScalarField::constant(1, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn identity_profile_is_flat() {
        let s = grid(0.01);
        let id = ScalarField::coordinate(&s, 0).unwrap();
        let p = pointwise_lip_profile(&s, &id, 50, &[0.08, 0.04, 0.02]).unwrap();
        for slope in &p.slopes {
            assert_abs_diff_eq!(*slope, 1.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(liplip_ratio(&s, &id, 50, &[0.08, 0.04, 0.02]).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn square_profile_at_one_tends_to_two() {
        let s = grid(0.001);
        let f = ScalarField::from_coords(&s, |c| c[0] * c[0]).unwrap();
        let x = s.len() - 1;
        let scales = [0.064, 0.032, 0.016, 0.008];
        let p = pointwise_lip_profile(&s, &f, x, &scales).unwrap();
        for (r, slope) in p.scales.iter().zip(&p.slopes) {
            // Enumeration oracle: the ball is [1 − r, 1], sup |y² − 1| = 1 − (1 − r)² = 2r − r².
            let oracle = (2.0 * r - r * r) / r;
            assert_abs_diff_eq!(*slope, oracle, epsilon = 1e-9);
            assert!((slope - 2.0).abs() <= r + 1e-9);
        }
    }

    #[test]
    fn distance_function_has_unit_slope_at_base() {
        let s = grid(0.125);
        let f = ScalarField::distance_to(&s, 3).unwrap();
        let p = pointwise_lip_profile(&s, &f, 3, &[0.375, 0.25, 0.125]).unwrap();
        assert!(p.slopes.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn constant_liplip_is_one() {
        let s = grid(0.1);
        let c = ScalarField::constant(s.len(), 5.0);
        assert_eq!(liplip_ratio(&s, &c, 4, &[0.4, 0.2]).unwrap(), 1.0);
    }

    #[test]
    fn scales_below_resolution_are_dropped() {
        let s = grid(0.1);
        let id = ScalarField::coordinate(&s, 0).unwrap();
        let p = pointwise_lip_profile(&s, &id, 5, &[0.2, 0.05]).unwrap();
        assert_eq!(p.scales, vec![0.2]);
        assert_eq!(p.dropped, vec![0.05]);
        assert_eq!(pointwise_lip_profile(&s, &id, 5, &[0.01]), Err(Error::NoUsableScales));
    }

    #[test]
    fn sawtooth_between_scales_has_large_ratio() {
        // Period 4 steps: slope 1 on short balls, tiny net change over long ones.
        let s = grid(0.01);
        let f = ScalarField::from_fn(s.len(), |i| {
            let k = i % 4;
            0.01 * (if k <= 2 { k as f64 } else { 4.0 - k as f64 })
        })
        .unwrap();
        let x = 40; // f(x) = 0, neighbors at ±1 step have value 0.01.
        let scales = [0.16, 0.01];
        let p = pointwise_lip_profile(&s, &f, x, &scales).unwrap();
        // Enumeration: at r = 0.01 the sup is 0.01/0.01 = 1; at r = 0.16 it is
        // max |f| = 0.02 divided by 0.16.
        assert_abs_diff_eq!(p.slopes[1], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.slopes[0], 0.02 / 0.16, epsilon = 1e-9);
        let ratio = liplip_ratio(&s, &f, x, &scales).unwrap();
        assert_abs_diff_eq!(ratio, 8.0, epsilon = 1e-6);
    }

    #[test]
    fn mcshane_examples() {
        let s = grid(0.1);
        let f: Vec<(usize, f64)> = (0..11).map(|i| (i, (i as f64).sin())).collect();
        let ext = mcshane_extend(&s, &f).unwrap();
        for (i, v) in f {
            assert_eq!(ext.get(i), v);
        }
        let ext = mcshane_extend(&s, &[(0, 0.0), (10, 1.0)]).unwrap();
        for i in 0..11 {
            let x = s.coords().unwrap()[i][0];
            assert_abs_diff_eq!(ext.get(i), x.min(2.0 - x), epsilon = 1e-12);
        }
        assert_eq!(mcshane_extend(&s, &[]), Err(Error::EmptySubset));
    }

    #[test]
    fn mcshane_on_cantor_endpoints() {
        let s = generate_space(&SpaceSpec::middle_thirds(6)).unwrap();
        let last = s.len() - 1;
        let ext = mcshane_extend(&s, &[(0, 0.0), (last, 1.0)]).unwrap();
        let endpoint = s.coords().unwrap()[last][0];
        let lip = 1.0 / endpoint;
        for x in 0..s.len() {
            let c = s.coords().unwrap()[x][0];
            let oracle = (lip * c).min(1.0 + lip * (endpoint - c));
            if x != 0 && x != last {
                assert_abs_diff_eq!(ext.get(x), oracle, epsilon = 1e-12);
            }
        }
        assert!(global_lip(&s, &ext).unwrap() <= lip * (1.0 + 1e-12));
    }

    #[test]
    fn weakstar_examples() {
        let s = grid(0.1);
        let f = ScalarField::coordinate(&s, 0).unwrap();
        let same = vec![f.clone(); 4];
        assert!(weakstar_check(&s, &same, &f, 1.0 + 1e-12, WEAKSTAR_TOL).unwrap().converges);
        let shifted: Vec<ScalarField> = (1..=9).map(|k| f.map(|v| v + 10f64.powi(-k))).collect();
        assert!(weakstar_check(&s, &shifted, &f, 1.0 + 1e-12, WEAKSTAR_TOL).unwrap().converges);
        // Sawtooth with slope m: L(f_m) = m breaks any fixed budget.
        let saw: Vec<ScalarField> = (1..=5)
            .map(|m| ScalarField::from_fn(s.len(), |i| if i % 2 == 0 { 0.0 } else { 0.1 * m as f64 }).unwrap())
            .collect();
        let zero = ScalarField::constant(s.len(), 0.0);
        let v = weakstar_check(&s, &saw, &zero, 3.0, WEAKSTAR_TOL).unwrap();
        assert_abs_diff_eq!(v.sup_lip, 5.0, epsilon = 1e-12);
        assert!(!v.converges);
        let other = generate_space(&SpaceSpec::grid_1d(0.0, 1.0, 0.5)).unwrap();
        assert!(weakstar_check(&other, &same, &f, 1.0, WEAKSTAR_TOL).is_err());
    }

    #[test]
    fn chain_rule_examples() {
        let s = grid(0.001);
        let id = ScalarField::coordinate(&s, 0).unwrap();
        let square = Polynomial::new(vec![Monomial { exponents: vec![2], coeff: 1.0 }]);
        let r = poly_chain_rule_check(&s, core::slice::from_ref(&id), 500, &square, &[0.004, 0.002]).unwrap();
        // Enumeration: sup |y² − 0.25| / r over |y − 0.5| ≤ r is 1 + r.
        assert_abs_diff_eq!(r.composite_lip, 1.004, epsilon = 1e-9);
        assert_abs_diff_eq!(r.bound, 1.0, epsilon = 1e-12);
        assert!(!r.violation);

        let c = ScalarField::constant(s.len(), 0.3);
        let cube = Polynomial::new(vec![Monomial { exponents: vec![3], coeff: 2.0 }]);
        let r = poly_chain_rule_check(&s, &[c], 500, &cube, &[0.004]).unwrap();
        assert_eq!(r.composite_lip, 0.0);
        assert!(!r.violation);

        // Locally constant near x = 0.5 (flat within 0.01), p = y³.
        let plateau = ScalarField::from_coords(&s, |c| if (c[0] - 0.5).abs() < 0.01 { 0.7 } else { c[0] }).unwrap();
        let r = poly_chain_rule_check(&s, &[plateau], 500, &cube, &[0.004, 0.002]).unwrap();
        assert_eq!(r.composite_lip, 0.0);
        assert_eq!(r.bound, 0.0);
    }

    fn random_field(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0f64..5.0, n)
    }

    proptest! {
        #[test]
        fn lower_upper_global_ordering(values in random_field(30), x in 0usize..30) {
            let s = generate_space(&SpaceSpec::RandomPoints { n: 30, dim: 2, seed: 11 }).unwrap();
            let f = ScalarField::new(values).unwrap();
            let scales = geometric_scales(0.8, 6);
            if let Ok(p) = pointwise_lip_profile(&s, &f, x, &scales) {
                prop_assert!(p.lower <= p.upper);
                prop_assert!(p.upper <= global_lip(&s, &f).unwrap());
                prop_assert!(p.slopes.iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn profile_is_positively_homogeneous(values in random_field(30), e in -4i32..4) {
            let s = generate_space(&SpaceSpec::RandomPoints { n: 30, dim: 2, seed: 5 }).unwrap();
            let f = ScalarField::new(values).unwrap();
            // Powers of two keep the scaling exact in floating point.
            let a = 2f64.powi(e);
            let scales = geometric_scales(1.0, 4);
            let p = pointwise_lip_profile(&s, &f, 0, &scales).unwrap();
            let q = pointwise_lip_profile(&s, &f.map(|v| a * v), 0, &scales).unwrap();
            for (u, v) in p.slopes.iter().zip(&q.slopes) {
                prop_assert_eq!(a * u, *v);
            }
        }

        #[test]
        fn liplip_invariant_under_affine_maps(values in random_field(30), a in 0.1f64..4.0, neg in any::<bool>(), b in -3.0f64..3.0) {
            let s = generate_space(&SpaceSpec::RandomPoints { n: 30, dim: 2, seed: 5 }).unwrap();
            let f = ScalarField::new(values).unwrap();
            let a = if neg { -a } else { a };
            let scales = geometric_scales(1.0, 4);
            let r1 = liplip_ratio(&s, &f, 3, &scales).unwrap();
            let r2 = liplip_ratio(&s, &f.map(|v| a * v + b), 3, &scales).unwrap();
            prop_assert!((r1 - r2).abs() <= 1e-9 * r1.abs().max(1.0));
        }

        #[test]
        fn mcshane_restricts_and_preserves_lip(values in random_field(40), mask in proptest::collection::vec(any::<bool>(), 40)) {
            let s = generate_space(&SpaceSpec::RandomPoints { n: 40, dim: 3, seed: 2 }).unwrap();
            let subset: Vec<(usize, f64)> = (0..40).filter(|&i| mask[i]).map(|i| (i, values[i])).collect();
            prop_assume!(!subset.is_empty());
            let ext = mcshane_extend(&s, &subset).unwrap();
            let idx: Vec<usize> = subset.iter().map(|p| p.0).collect();
            let lip_a = lip_on_subset(&s, &values, &idx);
            for &(a, v) in &subset {
                prop_assert_eq!(ext.get(a), v);
            }
            prop_assert!(global_lip(&s, &ext).unwrap() <= lip_a * (1.0 + 1e-12));
        }
    }
}
