//! Pushforward of measures and derivations along a map `ξ: X → Y` into a
//! finite target `Y = {0, …, k−1}`.
//!
//! `(ξ#δ)π(y)` is the μ-average of `δ(π ∘ ξ)` over the fiber `ξ⁻¹(y)`; with
//! this choice the duality identity
//! `Σ_Y φ · (ξ#δ)π · ξ#μ = Σ_X (φ ∘ ξ) · δ(π ∘ ξ) · μ` is an exact finite sum.

use alloc::vec;
use alloc::vec::Vec;

use super::StencilDerivation;
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

fn check_map(space: &FiniteMetricMeasureSpace, xi: &[usize], target_len: usize) -> Result<()> {
    if xi.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), got: xi.len() });
    }
    if let Some(&bad) = xi.iter().find(|&&y| y >= target_len) {
        return Err(Error::UnknownPoint(bad));
    }
    Ok(())
}

pub fn pushforward_measure(space: &FiniteMetricMeasureSpace, xi: &[usize], target_len: usize) -> Result<Vec<f64>> {
    check_map(space, xi, target_len)?;
    let mut out = vec![0.0; target_len];
    for (x, &y) in xi.iter().enumerate() {
        out[y] += space.weight(x);
    }
    Ok(out)
}

/// μ-weighted average of per-point `values` over each fiber; 0 on empty fibers.
pub fn fiber_average(space: &FiniteMetricMeasureSpace, xi: &[usize], target_len: usize, values: &[f64]) -> Result<Vec<f64>> {
    let mass = pushforward_measure(space, xi, target_len)?;
    if values.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), got: values.len() });
    }
    let mut acc = vec![0.0; target_len];
    for (x, &y) in xi.iter().enumerate() {
        acc[y] += space.weight(x) * values[x];
    }
    Ok(mass.iter().zip(&acc).map(|(m, a)| if *m > 0.0 { a / m } else { 0.0 }).collect())
}

/// `(ξ#δ)π` on `Y`; 0 on empty fibers.
pub fn pushforward_derivation(
    space: &FiniteMetricMeasureSpace,
    xi: &[usize],
    target_len: usize,
    delta: &StencilDerivation,
    pi: &[f64],
) -> Result<Vec<f64>> {
    check_map(space, xi, target_len)?;
    if pi.len() != target_len {
        return Err(Error::LengthMismatch { expected: target_len, got: pi.len() });
    }
    if delta.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), got: delta.len() });
    }
    let pulled: Vec<f64> = xi.iter().map(|&y| pi[y]).collect();
    let values: Vec<f64> = (0..space.len()).map(|x| delta.apply_at(&pulled, x)).collect();
    fiber_average(space, xi, target_len, &values)
}

/// Relative residual of the duality identity for one test pair `(φ, π)`,
/// normalized by `Σ_X |(φ ∘ ξ) · δ(π ∘ ξ) · μ|` (absolute when that vanishes).
pub fn duality_residual(
    space: &FiniteMetricMeasureSpace,
    xi: &[usize],
    target_len: usize,
    delta: &StencilDerivation,
    phi: &[f64],
    pi: &[f64],
) -> Result<f64> {
    if phi.len() != target_len {
        return Err(Error::LengthMismatch { expected: target_len, got: phi.len() });
    }
    let push = pushforward_derivation(space, xi, target_len, delta, pi)?;
    let mass = pushforward_measure(space, xi, target_len)?;
    let lhs: f64 = (0..target_len).map(|y| phi[y] * push[y] * mass[y]).sum();
    let pulled: Vec<f64> = xi.iter().map(|&y| pi[y]).collect();
    let mut rhs = 0.0;
    let mut scale = 0.0;
    for (x, &y) in xi.iter().enumerate() {
        let term = phi[y] * delta.apply_at(&pulled, x) * space.weight(x);
        rhs += term;
        scale += term.abs();
    }
    let diff = (lhs - rhs).abs();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivations::{build_stencil, Scheme};
    use crate::field::ScalarField;
    use crate::space::{generate_space, SpaceSpec};
    use proptest::prelude::*;

    #[test]
    fn identity_map() {
        let s = generate_space(&SpaceSpec::RandomPoints { n: 10, dim: 2, seed: 4 }).unwrap();
        let d = build_stencil(&s, &Scheme::NearestNeighborDirection, 1.0).unwrap();
        let xi: Vec<usize> = (0..10).collect();
        assert_eq!(pushforward_measure(&s, &xi, 10).unwrap(), s.weights());
        let pi: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        let push = pushforward_derivation(&s, &xi, 10, &d, &pi).unwrap();
        let direct = d.apply(&ScalarField::new(pi).unwrap()).unwrap();
        for y in 0..10 {
            assert!((push[y] - direct.get(y)).abs() <= 1e-12 * direct.get(y).abs().max(1.0));
        }
    }

    #[test]
    fn collapse_to_a_point() {
        let s = generate_space(&SpaceSpec::RandomPoints { n: 10, dim: 2, seed: 4 }).unwrap();
        let d = build_stencil(&s, &Scheme::NearestNeighborDirection, 1.0).unwrap();
        let push = pushforward_derivation(&s, &[0; 10], 1, &d, &[3.5]).unwrap();
        assert_eq!(push, vec![0.0]);
    }

    #[test]
    fn two_point_fiber_average() {
        let s = FiniteMetricMeasureSpace::from_distance_matrix(
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![1.0, 3.0],
        )
        .unwrap();
        assert_eq!(pushforward_measure(&s, &[0, 0], 1).unwrap(), vec![4.0]);
        assert_eq!(fiber_average(&s, &[0, 0], 1, &[4.0, 0.0]).unwrap(), vec![1.0]);
        assert_eq!(fiber_average(&s, &[0, 0], 2, &[4.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        let d = StencilDerivation::from_parts(&s, 1.0, vec![vec![(1, 1.0)], vec![]]);
        assert!(duality_residual(&s, &[0, 0], 1, &d, &[1.0], &[2.0]).unwrap() <= 1e-12);
        assert!(duality_residual(&s, &[0, 1], 2, &d, &[1.0, 1.0], &[0.0, 4.0]).unwrap() <= 1e-12);
    }

    proptest! {
        #[test]
        fn duality_holds(seed in 0u64..10_000, k in 1usize..8, map in proptest::collection::vec(0usize..8, 30),
                         w in proptest::collection::vec(0.1f64..5.0, 30), phi in proptest::collection::vec(-2.0f64..2.0, 8),
                         pi in proptest::collection::vec(-2.0f64..2.0, 8)) {
            let s = generate_space(&SpaceSpec::RandomPoints { n: 30, dim: 2, seed }).unwrap().with_weights(w).unwrap();
            let d = build_stencil(&s, &Scheme::Direction { v: vec![1.0, 0.5] }, 0.6).unwrap();
            let xi: Vec<usize> = map.iter().map(|y| y % k).collect();
            let r = duality_residual(&s, &xi, k, &d, &phi[..k], &pi[..k]).unwrap();
            prop_assert!(r <= 1e-12);
        }
    }
}
