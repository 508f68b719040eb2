//! Jacobi fields `dg(x) = [δ_i g_j(x)]` (row `i` per derivation, column `j`
//! per generator) and their pointwise linear algebra.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::StencilDerivation;
use crate::field::ScalarField;
use crate::linalg::{for_each_subset, pivot_columns, rank_from_singular_values, Matrix};
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result, NULL_MASS_FRACTION};

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiField {
    /// Number of derivations (rows).
    pub m: usize,
    /// Number of generators (columns).
    pub n: usize,
    pub matrices: Vec<Matrix>,
}

impl JacobiField {
    pub fn from_matrices(m: usize, n: usize, matrices: Vec<Matrix>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::invalid("Jacobi fields need at least one derivation and one generator"));
        }
        for a in &matrices {
            if a.rows() != m || a.cols() != n {
                return Err(Error::invalid("inconsistent Jacobi matrix shape"));
            }
            if a.as_slice().iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite Jacobi entry"));
            }
        }
        Ok(JacobiField { m, n, matrices })
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn at(&self, x: usize) -> &Matrix {
        &self.matrices[x]
    }
}

pub fn jacobi_matrix(derivs: &[StencilDerivation], generators: &[ScalarField]) -> Result<JacobiField> {
    if derivs.is_empty() || generators.is_empty() {
        return Err(Error::invalid("need at least one derivation and one generator"));
    }
    let len = derivs[0].len();
    let applied: Vec<Vec<ScalarField>> =
        derivs.iter().map(|d| generators.iter().map(|g| d.apply(g)).collect::<Result<Vec<_>>>()).collect::<Result<_>>()?;
    if derivs.iter().any(|d| d.len() != len) {
        return Err(Error::LengthMismatch { expected: len, got: derivs.iter().map(|d| d.len()).find(|&l| l != len).unwrap() });
    }
    let (m, n) = (derivs.len(), generators.len());
    let matrices = (0..len)
        .map(|x| {
            let mut a = Matrix::zeros(m, n);
            for i in 0..m {
                for j in 0..n {
                    a[(i, j)] = applied[i][j].get(x);
                }
            }
            a
        })
        .collect();
    JacobiField::from_matrices(m, n, matrices)
}

/// Default relative rank tolerance `max(1e-8, 10 h / diam)`.
pub fn default_rank_tol(h: f64, diam: f64) -> f64 {
    if diam > 0.0 {
        (10.0 * h / diam).max(1e-8)
    } else {
        1e-8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub tol: f64,
    pub ranks: Vec<usize>,
    pub singular_values: Vec<Vec<f64>>,
    /// Per point, a generator subset of size `rank` with independent columns.
    pub subsets: Vec<Vec<usize>>,
    /// `rank_mass[r]` is the μ-fraction of points with rank exactly `r`.
    pub rank_mass: Vec<f64>,
    /// Largest `r` such that points of rank `≥ r` carry more than the null
    /// mass fraction.
    pub essential_rank: usize,
}

pub fn pointwise_rank(space: &FiniteMetricMeasureSpace, jf: &JacobiField, tol: f64) -> Result<RankReport> {
    if !(tol > 0.0) {
        return Err(Error::invalid("rank tolerance must be positive"));
    }
    if jf.len() != space.len() {
        return Err(Error::LengthMismatch { expected: space.len(), got: jf.len() });
    }
    let max_rank = jf.m.min(jf.n);
    let mut ranks = Vec::with_capacity(jf.len());
    let mut singular_values = Vec::with_capacity(jf.len());
    let mut subsets = Vec::with_capacity(jf.len());
    let mut rank_mass = vec![0.0; max_rank + 1];
    let total = space.total_mass();
    for (x, a) in jf.matrices.iter().enumerate() {
        let sv = a.singular_values();
        let r = rank_from_singular_values(&sv, tol);
        rank_mass[r] += space.weight(x) / total;
        subsets.push(pivot_columns(a, r));
        ranks.push(r);
        singular_values.push(sv);
    }
    let essential_rank = essential_max(&rank_mass);
    Ok(RankReport { tol, ranks, singular_values, subsets, rank_mass, essential_rank })
}

pub(crate) fn essential_max(rank_mass: &[f64]) -> usize {
    let mut tail = 0.0;
    for r in (0..rank_mass.len()).rev() {
        tail += rank_mass[r];
        if tail > NULL_MASS_FRACTION {
            return r;
        }
    }
    0
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthoPoint {
    /// Generator columns of the chosen `M × M` minor `A(x)`.
    pub subset: Vec<usize>,
    pub det: f64,
    /// `adj(A(x))`: row `i` expresses `δ*_i` in the original derivations.
    pub coefficients: Matrix,
    /// `adj(A(x)) · dg(x)`, equal to `det · I` on the chosen columns.
    pub jacobi: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalBasisResult {
    pub points: Vec<Option<OrthoPoint>>,
    /// Points grouped by chosen subset.
    pub blocks: BTreeMap<Vec<usize>, Vec<usize>>,
    /// Points where every `M × M` minor is numerically singular.
    pub degenerate: Vec<usize>,
}

/// Largest number of generators for which all minors are searched.
pub const EXHAUSTIVE_MINOR_LIMIT: usize = 12;

pub fn orthogonalize(jf: &JacobiField, tol: f64) -> Result<OrthogonalBasisResult> {
    if jf.m > jf.n {
        return Err(Error::Precondition("more derivations than generators: no M × M minor can be nonsingular".into()));
    }
    let mut points = Vec::with_capacity(jf.len());
    let mut blocks: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    let mut degenerate = Vec::new();
    let rows: Vec<usize> = (0..jf.m).collect();
    for (x, a) in jf.matrices.iter().enumerate() {
        if a.rank(tol) < jf.m {
            degenerate.push(x);
            points.push(None);
            continue;
        }
        let subset = if jf.n <= EXHAUSTIVE_MINOR_LIMIT {
            let mut best = (Vec::new(), -1.0);
            for_each_subset(jf.n, jf.m, |s| {
                let d = a.select(&rows, s).det().abs();
                if d > best.1 {
                    best = (s.to_vec(), d);
                }
            });
            best.0
        } else {
            pivot_columns(a, jf.m)
        };
        let minor = a.select(&rows, &subset);
        let det = minor.det();
        if det == 0.0 {
            degenerate.push(x);
            points.push(None);
            continue;
        }
        let coefficients = minor.adjugate();
        let jacobi = coefficients.mul(a);
        blocks.entry(subset.clone()).or_default().push(x);
        points.push(Some(OrthoPoint { subset, det, coefficients, jacobi }));
    }
    Ok(OrthogonalBasisResult { points, blocks, degenerate })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeOfVariables {
    /// `N × N` matrix of the linear map `T`.
    pub t: Matrix,
    /// `d(T ∘ g)(x₀) = dg(x₀) · Tᵀ`.
    pub transformed: Matrix,
    /// The common diagonal value `δ₁g₁(x₀)`.
    pub leading: f64,
    /// `max |d(T ∘ g)(x₀) − δ₁g₁(x₀) [I_M | O]|`.
    pub residual: f64,
}

/// Linear change of generators that clears the tail columns of an
/// orthogonalized Jacobi matrix: `T_j = z_j` for `j ≤ M` and
/// `T_j = a z_j − Σ_{i ≤ M} δ_i g_j z_i` for `j > M`, where `a = δ₁g₁`.
pub fn change_of_variables(dg: &Matrix, tol: f64) -> Result<ChangeOfVariables> {
    let (m, n) = (dg.rows(), dg.cols());
    if m == 0 || m > n {
        return Err(Error::Precondition("need 1 ≤ M ≤ N".into()));
    }
    let a = dg[(0, 0)];
    if a == 0.0 || !a.is_finite() {
        return Err(Error::Precondition("δ₁g₁(x₀) must be nonzero".into()));
    }
    let slack = tol * dg.max_abs();
    for i in 0..m {
        for j in 0..m {
            let want = if i == j { a } else { 0.0 };
            if (dg[(i, j)] - want).abs() > slack {
                return Err(Error::Precondition("leading M × M block must be δ₁g₁(x₀) · I".into()));
            }
        }
    }
    let mut t = Matrix::zeros(n, n);
    for j in 0..m {
        t[(j, j)] = 1.0;
    }
    for j in m..n {
        t[(j, j)] = a;
        for i in 0..m {
            t[(j, i)] = -dg[(i, j)];
        }
    }
    let transformed = dg.mul(&t.transpose());
    let mut residual = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            let want = if i == j { a } else { 0.0 };
            residual = residual.max((transformed[(i, j)] - want).abs());
        }
    }
    Ok(ChangeOfVariables { t, transformed, leading: a, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivations::{build_stencil, build_stencils, Scheme};
    use crate::space::{generate_space, SpaceSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn constant_field(a: Matrix, len: usize) -> JacobiField {
        JacobiField::from_matrices(a.rows(), a.cols(), vec![a; len]).unwrap()
    }

    #[test]
    fn identity_on_planar_grid() {
        let s = generate_space(&SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step: 0.125 }).unwrap();
        let d = build_stencils(&s, &[Scheme::CoordinateAxis { axis: 0 }, Scheme::CoordinateAxis { axis: 1 }], 0.125).unwrap();
        let g = [ScalarField::coordinate(&s, 0).unwrap(), ScalarField::coordinate(&s, 1).unwrap()];
        let jf = jacobi_matrix(&d, &g).unwrap();
        for a in &jf.matrices {
            assert_eq!(a, &Matrix::identity(2));
        }
        let r = pointwise_rank(&s, &jf, 1e-8).unwrap();
        assert_eq!(r.essential_rank, 2);
        assert!(r.ranks.iter().all(|&k| k == 2));
    }

    #[test]
    fn square_generator_row() {
        let h = 0.125;
        let s = generate_space(&SpaceSpec::grid_1d(0.0, 1.0, h)).unwrap();
        let d = build_stencil(&s, &Scheme::CoordinateAxis { axis: 0 }, h).unwrap();
        let g = [ScalarField::coordinate(&s, 0).unwrap(), ScalarField::from_coords(&s, |c| c[0] * c[0]).unwrap()];
        let jf = jacobi_matrix(core::slice::from_ref(&d), &g).unwrap();
        for x in 0..8 {
            let c = x as f64 * h;
            assert_eq!(jf.at(x)[(0, 0)], 1.0);
            assert_abs_diff_eq!(jf.at(x)[(0, 1)], 2.0 * c + h, epsilon = 1e-12);
        }
        let zero = d.restrict(&vec![false; s.len()]).unwrap();
        let jf = jacobi_matrix(&[d, zero], &g).unwrap();
        assert!(jf.matrices.iter().all(|a| a.row(1).iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_rows_have_rank_one() {
        let s = generate_space(&SpaceSpec::PathGraph { n: 3, edge: 1.0 }).unwrap();
        let jf = constant_field(Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]), 3);
        assert_eq!(pointwise_rank(&s, &jf, 1e-8).unwrap().essential_rank, 1);
    }

    #[test]
    fn three_directions_in_the_plane() {
        let h = 1.0 / 32.0;
        let s = generate_space(&SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step: h }).unwrap();
        let schemes = [
            Scheme::Direction { v: vec![1.0, 0.0] },
            Scheme::Direction { v: vec![0.0, 1.0] },
            Scheme::Direction { v: vec![1.0, 1.0] },
        ];
        let d = build_stencils(&s, &schemes, h * 1.5).unwrap();
        let g = [
            ScalarField::from_coords(&s, |c| c[0] + c[1] * c[1]).unwrap(),
            ScalarField::from_coords(&s, |c| c[0] * c[1] - c[1]).unwrap(),
            ScalarField::from_coords(&s, |c| c[0] * c[0] + c[1]).unwrap(),
        ];
        let jf = jacobi_matrix(&d, &g).unwrap();
        let r = pointwise_rank(&s, &jf, 10.0 * h).unwrap();
        assert_eq!(r.essential_rank, 2);
        let worst = r.singular_values.iter().map(|sv| sv[2] / sv[0]).fold(0.0, f64::max);
        assert!(worst <= 10.0 * h, "σ₃/σ₁ = {worst}");
        assert!(worst > 0.0);
    }

    #[test]
    fn orthogonalize_examples() {
        let r = orthogonalize(&constant_field(Matrix::identity(2), 1), 1e-12).unwrap();
        let p = r.points[0].as_ref().unwrap();
        assert_eq!(p.coefficients, Matrix::identity(2));
        assert_eq!(p.jacobi, Matrix::identity(2));

        let r = orthogonalize(&constant_field(Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]), 1), 1e-12).unwrap();
        let p = r.points[0].as_ref().unwrap();
        assert_abs_diff_eq!(p.det, -2.0, epsilon = 1e-14);
        let adj = Matrix::from_rows(&[[4.0, -2.0], [-3.0, 1.0]]);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(p.coefficients[(i, j)], adj[(i, j)], epsilon = 1e-14);
                let want = if i == j { -2.0 } else { 0.0 };
                assert_abs_diff_eq!(p.jacobi[(i, j)], want, epsilon = 1e-14);
            }
        }

        let r = orthogonalize(&constant_field(Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]), 2), 1e-12).unwrap();
        assert_eq!(r.degenerate, vec![0, 1]);
        assert!(r.blocks.is_empty());
    }

    #[test]
    fn picks_largest_minor() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 5.0], [0.0, 0.1, 1.0]]);
        let r = orthogonalize(&constant_field(a, 1), 1e-12).unwrap();
        // |det| over column pairs: (0,1) 0.1, (0,2) 1, (1,2) 0.5.
        assert_eq!(r.points[0].as_ref().unwrap().subset, vec![0, 2]);
    }

    #[test]
    fn change_of_variables_examples() {
        let c = change_of_variables(&Matrix::from_rows(&[[2.0, 3.0]]), 1e-12).unwrap();
        assert_eq!(c.t, Matrix::from_rows(&[[1.0, 0.0], [-3.0, 2.0]]));
        assert_eq!(c.transformed, Matrix::from_rows(&[[2.0, 0.0]]));
        let c = change_of_variables(&Matrix::from_rows(&[[5.0, 0.0], [0.0, 5.0]]), 1e-12).unwrap();
        assert_eq!(c.t, Matrix::identity(2));
        let c = change_of_variables(&Matrix::from_rows(&[[1.5, 0.0, 0.0]]), 1e-12).unwrap();
        assert_eq!(c.t, Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.5, 0.0], [0.0, 0.0, 1.5]]));
        assert!(change_of_variables(&Matrix::from_rows(&[[0.0, 1.0]]), 1e-12).is_err());
        assert!(change_of_variables(&Matrix::from_rows(&[[1.0, 0.5, 0.0], [0.0, 1.0, 2.0]]), 1e-12).is_err());
    }

    fn random_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
    }

    proptest! {
        #[test]
        fn orthogonalized_jacobi_is_det_identity(m in 1usize..=5, extra in 0usize..3, seed in any::<u64>()) {
            let n = m + extra;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            let data: Vec<f64> = (0..m * n).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
            let a = Matrix::from_vec(m, n, data);
            let r = orthogonalize(&constant_field(a, 1), 1e-12).unwrap();
            let p = r.points[0].as_ref().unwrap();
            for i in 0..m {
                for (k, &j) in p.subset.iter().enumerate() {
                    let want = if i == k { p.det } else { 0.0 };
                    prop_assert!((p.jacobi[(i, j)] - want).abs() <= 1e-9 * p.det.abs());
                }
            }
        }

        #[test]
        fn scaling_rows_preserves_rank(a in random_matrix(3, 4), lam in proptest::collection::vec(0.1f64..10.0, 3)) {
            let s = generate_space(&SpaceSpec::PathGraph { n: 1, edge: 1.0 }).unwrap();
            let mut b = a.clone();
            for i in 0..3 {
                for j in 0..4 {
                    b[(i, j)] *= lam[i];
                }
            }
            let r1 = pointwise_rank(&s, &constant_field(a, 1), 1e-8).unwrap();
            let r2 = pointwise_rank(&s, &constant_field(b, 1), 1e-8).unwrap();
            prop_assert_eq!(r1.ranks, r2.ranks);
        }

        #[test]
        fn change_of_variables_identity(m in 1usize..=4, extra in 0usize..4, a in 0.1f64..5.0, tail in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let n = m + extra;
            let mut dg = Matrix::zeros(m, n);
            for i in 0..m {
                dg[(i, i)] = a;
                for j in m..n {
                    dg[(i, j)] = tail[i * 4 + (j - m)];
                }
            }
            let c = change_of_variables(&dg, 1e-12).unwrap();
            prop_assert!(c.residual <= 1e-12);
            prop_assert!(c.t.det().abs() > 0.0);
        }
    }
}
