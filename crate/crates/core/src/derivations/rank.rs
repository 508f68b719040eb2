//! Budgeted stencil families, the chain-rule field `v_f` and the rank-versus-
//! scale experiment.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{build_stencils, jacobi_matrix, pointwise_rank, Scheme, StencilDerivation};
use crate::field::ScalarField;
use crate::linalg::Matrix;
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

/// `budget` stencils of radius `h`. With coordinates the directions run
/// through `+e_i`, `−e_i`, then `±(e_i ± e_j)`, repeating if needed; without
/// coordinates stencil `k` points to the `k`-th nearest neighbor.
pub fn budget_stencils(space: &FiniteMetricMeasureSpace, h: f64, budget: usize) -> Result<Vec<StencilDerivation>> {
    if budget == 0 {
        return Err(Error::invalid("stencil budget must be positive"));
    }
    let schemes: Vec<Scheme> = match space.ambient_dim() {
        Some(dim) => {
            let dirs = direction_catalog(dim);
            (0..budget).map(|k| Scheme::Direction { v: dirs[k % dirs.len()].clone() }).collect()
        }
        None => {
            let all: Vec<usize> = (0..space.len()).collect();
            (0..budget).map(|k| Scheme::NetDirection { net: all.clone(), k }).collect()
        }
    };
    build_stencils(space, &schemes, h)
}

fn direction_catalog(dim: usize) -> Vec<Vec<f64>> {
    let unit = |i: usize, s: f64| {
        let mut v = vec![0.0; dim];
        v[i] = s;
        v
    };
    let mut out: Vec<Vec<f64>> = (0..dim).map(|i| unit(i, 1.0)).collect();
    out.extend((0..dim).map(|i| unit(i, -1.0)));
    for sign in [1.0, -1.0] {
        for i in 0..dim {
            for j in i + 1..dim {
                for t in [1.0, -1.0] {
                    let mut v = unit(i, sign);
                    v[j] = sign * t;
                    out.push(v);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRuleField {
    /// Per point, the solution of `δ_k f = Σ_i v^i δ_k x_i`, or `None` where
    /// the coordinate Jacobi matrix is singular.
    pub v: Vec<Option<Vec<f64>>>,
    /// Per point, `max_k |δ_k f − Σ_i v^i δ_k x_i|`.
    pub residual: Vec<f64>,
    pub skipped: Vec<usize>,
}

pub fn chain_rule_field(space: &FiniteMetricMeasureSpace, derivs: &[StencilDerivation], f: &ScalarField) -> Result<ChainRuleField> {
    let dim = space.ambient_dim().ok_or_else(|| Error::invalid("chain rule field needs point coordinates"))?;
    let coords: Vec<ScalarField> = (0..dim).map(|i| ScalarField::coordinate(space, i)).collect::<Result<_>>()?;
    let jx = jacobi_matrix(derivs, &coords)?;
    let jf = jacobi_matrix(derivs, core::slice::from_ref(f))?;
    let mut v = Vec::with_capacity(space.len());
    let mut residual = Vec::with_capacity(space.len());
    let mut skipped = Vec::new();
    for x in 0..space.len() {
        let a: &Matrix = jx.at(x);
        let b = jf.at(x).column(0);
        let svd = a.svd();
        let sv = &svd.singular_values;
        if sv.len() < dim || sv[dim - 1] <= 1e-10 * sv[0] {
            v.push(None);
            residual.push(f64::NAN);
            skipped.push(x);
            continue;
        }
        let sol = svd.solve(&b, 1e-10);
        let fit = a.mul_vec(&sol);
        residual.push(fit.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs())));
        v.push(Some(sol));
    }
    Ok(ChainRuleField { v, residual, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub radius: f64,
    pub tol: f64,
    pub essential_rank: usize,
    pub rank_mass: Vec<f64>,
    /// `max_x σ_{r+1}(x) / σ_1(x)` for the essential rank `r` (0 if `r` is full).
    pub tail_ratio: f64,
    /// `max_{k,x} |δ_k g_j(x)|` per generator.
    pub generator_decay: Vec<f64>,
    /// Essential rank at most the supplied embedding dimension.
    pub within_embedding_dim: Option<bool>,
}

pub fn rank_bound_experiment(
    space: &FiniteMetricMeasureSpace,
    radii: &[f64],
    generators: &[ScalarField],
    budget: usize,
    tol: Option<f64>,
    embedding_dim: Option<usize>,
) -> Result<Vec<RankRow>> {
    if budget < 2 {
        return Err(Error::invalid("stencil budget must be at least 2"));
    }
    let diam = space.diameter();
    radii
        .iter()
        .map(|&h| {
            let derivs = budget_stencils(space, h, budget)?;
            let jf = jacobi_matrix(&derivs, generators)?;
            let tol = tol.unwrap_or_else(|| super::jacobi::default_rank_tol(h, diam));
            let report = pointwise_rank(space, &jf, tol)?;
            let r = report.essential_rank;
            let tail_ratio = report
                .singular_values
                .iter()
                .map(|sv| match (sv.first(), sv.get(r)) {
                    (Some(&s1), Some(&sr)) if s1 > 0.0 => sr / s1,
                    _ => 0.0,
                })
                .fold(0.0, f64::max);
            let generator_decay = (0..generators.len())
                .map(|j| jf.matrices.iter().flat_map(|a| a.column(j)).fold(0.0f64, |m, v| m.max(v.abs())))
                .collect();
            Ok(RankRow {
                radius: h,
                tol,
                essential_rank: r,
                rank_mass: report.rank_mass,
                tail_ratio,
                generator_decay,
                within_embedding_dim: embedding_dim.map(|n| r <= n),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{generate_space, SpaceSpec};
    use approx::assert_abs_diff_eq;

    #[test]
    fn catalog_in_the_plane() {
        let d = direction_catalog(2);
        assert_eq!(d[..4], [vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]]);
        assert_eq!(d.len(), 8);
    }

    #[test]
    fn chain_rule_on_linear_and_product() {
        let h = 1.0 / 16.0;
        let s = generate_space(&SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step: h }).unwrap();
        let derivs = budget_stencils(&s, h, 2).unwrap();
        let lin = ScalarField::from_coords(&s, |c| 3.0 * c[0] - 0.5 * c[1]).unwrap();
        let r = chain_rule_field(&s, &derivs, &lin).unwrap();
        assert!(r.skipped.is_empty());
        for v in r.v.iter().flatten() {
            assert_abs_diff_eq!(v[0], 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(v[1], -0.5, epsilon = 1e-12);
        }
        let prod = ScalarField::from_coords(&s, |c| c[0] * c[1]).unwrap();
        let r = chain_rule_field(&s, &derivs, &prod).unwrap();
        let coords = s.coords().unwrap();
        for (x, v) in r.v.iter().enumerate() {
            let v = v.as_ref().unwrap();
            assert!((v[0] - coords[x][1]).abs() <= h + 1e-12);
            assert!((v[1] - coords[x][0]).abs() <= h + 1e-12);
        }
        let c = ScalarField::constant(s.len(), 1.0);
        let r = chain_rule_field(&s, &derivs, &c).unwrap();
        assert!(r.v.iter().flatten().all(|v| v.iter().all(|&t| t == 0.0)));
    }

    #[test]
    fn planar_rank_is_two() {
        let h = 1.0 / 16.0;
        let s = generate_space(&SpaceSpec::EuclideanGrid { dim: 2, lo: 0.0, hi: 1.0, step: h }).unwrap();
        let gens = [
            ScalarField::coordinate(&s, 0).unwrap(),
            ScalarField::coordinate(&s, 1).unwrap(),
            ScalarField::from_coords(&s, |c| c[0] * c[0] + c[1] * c[1]).unwrap(),
        ];
        let rows = rank_bound_experiment(&s, &[h, 2.0 * h], &gens, 4, None, Some(2)).unwrap();
        for row in rows {
            assert_eq!(row.essential_rank, 2);
            assert!(row.tail_ratio <= 10.0 * row.radius);
            assert_eq!(row.within_embedding_dim, Some(true));
        }
    }

    #[test]
    fn line_rank_is_one() {
        let h = 1.0 / 32.0;
        let s = generate_space(&SpaceSpec::grid_1d(0.0, 1.0, h)).unwrap();
        let gens = [ScalarField::coordinate(&s, 0).unwrap(), ScalarField::from_coords(&s, |c| c[0] * c[0]).unwrap()];
        for budget in [2, 3, 5] {
            let rows = rank_bound_experiment(&s, &[h, 2.0 * h], &gens, budget, None, None).unwrap();
            assert!(rows.iter().all(|r| r.essential_rank == 1));
        }
    }

    #[test]
    fn metric_only_space_uses_neighbor_stencils() {
        let n = 20;
        let ids = (0..n).map(|i| alloc::format!("p{i}")).collect();
        let m = (0..n).map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect()).collect();
        let s = FiniteMetricMeasureSpace::from_distance_matrix(ids, m, vec![1.0; n]).unwrap();
        let d = budget_stencils(&s, 2.0, 3).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d[0].stencils[5], vec![(4, 1.0)]);
        assert_eq!(d[1].stencils[5], vec![(6, 1.0)]);
        assert_eq!(d[2].stencils[5], vec![(3, 0.5)]);
    }
}
