//! Kuhn (ordering) triangulation of the dyadic lattice `2^{-n} ℤ^N` and
//! piecewise-linear extension of lattice data.
//!
//! The cube with corner `2^{-n}·b` is split into `N!` simplices, one per
//! ordering `π` of the coordinates: vertex `k` is `b + e_{π₁} + … + e_{π_k}`.
//! A point lies in the simplex whose ordering sorts its fractional offsets in
//! descending order.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::math::{dist, floor, norm, powi};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KuhnTriangulation {
    pub dim: usize,
    /// Lattice spacing is `2^{-level}`.
    pub level: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexLocation {
    /// Lattice indices of the `N + 1` vertices in path order.
    pub vertices: Vec<Vec<i64>>,
    pub barycentric: Vec<f64>,
    /// Coordinate ordering defining the simplex.
    pub order: Vec<usize>,
}

impl KuhnTriangulation {
    pub fn new(dim: usize, level: i32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(KuhnTriangulation { dim, level })
    }

    pub fn scale(&self) -> f64 {
        powi(2.0, -self.level)
    }

    pub fn vertex_point(&self, v: &[i64]) -> Vec<f64> {
        let h = self.scale();
        v.iter().map(|&k| k as f64 * h).collect()
    }

    pub fn locate(&self, z: &[f64]) -> Result<SimplexLocation> {
        if z.len() != self.dim {
            return Err(Error::LengthMismatch { expected: self.dim, got: z.len() });
        }
        if z.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("query point must be finite"));
        }
        let h = self.scale();
        let q: Vec<f64> = z.iter().map(|c| c / h).collect();
        let base: Vec<i64> = q.iter().map(|&c| floor(c) as i64).collect();
        let frac: Vec<f64> = q.iter().zip(&base).map(|(c, b)| c - *b as f64).collect();
        let mut order: Vec<usize> = (0..self.dim).collect();
        // Stable: equal offsets keep coordinate-index order.
        order.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]));
        Ok(self.simplex(base, order, &frac))
    }

    fn simplex(&self, base: Vec<i64>, order: Vec<usize>, frac: &[f64]) -> SimplexLocation {
        let n = self.dim;
        let mut vertices = Vec::with_capacity(n + 1);
        let mut v = base;
        vertices.push(v.clone());
        for &axis in &order {
            v[axis] += 1;
            vertices.push(v.clone());
        }
        let mut barycentric = vec![0.0; n + 1];
        barycentric[0] = 1.0 - frac[order[0]];
        for k in 1..n {
            barycentric[k] = frac[order[k - 1]] - frac[order[k]];
        }
        barycentric[n] = frac[order[n - 1]];
        SimplexLocation { vertices, barycentric, order }
    }

    /// All `N!` simplices of the cube with lower corner `base`.
    pub fn cube_simplices(&self, base: &[i64]) -> Vec<Vec<Vec<i64>>> {
        let zero = vec![0.0; self.dim];
        permutations(self.dim).into_iter().map(|order| self.simplex(base.to_vec(), order, &zero).vertices).collect()
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else { break };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
    out
}

/// Gradient of the affine function taking `values[k]` at `points[k]` on a
/// nondegenerate simplex. `None` if the simplex is degenerate.
pub fn affine_gradient(points: &[Vec<f64>], values: &[f64]) -> Option<Vec<f64>> {
    let n = points.len().checked_sub(1)?;
    if values.len() != n + 1 || points.iter().any(|p| p.len() != n) {
        return None;
    }
    let mut a = Matrix::zeros(n, n);
    let mut b = vec![0.0; n];
    for k in 0..n {
        for j in 0..n {
            a[(k, j)] = points[k + 1][j] - points[0][j];
        }
        b[k] = values[k + 1] - values[0];
    }
    a.solve(&b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlExtension {
    pub values: Vec<f64>,
    /// Gradient of the simplex containing each query.
    pub gradients: Vec<Vec<f64>>,
    /// Max gradient norm over the visited simplices.
    pub lip_extension: f64,
    /// Lipschitz constant of the vertex data over all vertex pairs.
    pub lip_vertices: f64,
    /// `lip_extension / lip_vertices` (1 when both vanish).
    pub ratio: f64,
}

pub type LatticeField = BTreeMap<Vec<i64>, f64>;

/// Lipschitz constant of lattice data for the Euclidean distance.
pub fn vertex_lip(tri: &KuhnTriangulation, f: &LatticeField) -> f64 {
    let pts: Vec<(Vec<f64>, f64)> = f.iter().map(|(v, &x)| (tri.vertex_point(v), x)).collect();
    let mut best = 0.0f64;
    for (a, (p, x)) in pts.iter().enumerate() {
        for (q, y) in &pts[a + 1..] {
            best = best.max((x - y).abs() / dist(p, q));
        }
    }
    best
}

pub fn pl_extend(tri: &KuhnTriangulation, f: &LatticeField, queries: &[Vec<f64>]) -> Result<PlExtension> {
    if let Some(bad) = f.keys().find(|v| v.len() != tri.dim) {
        return Err(Error::LengthMismatch { expected: tri.dim, got: bad.len() });
    }
    let h = tri.scale();
    let mut values = Vec::with_capacity(queries.len());
    let mut gradients = Vec::with_capacity(queries.len());
    let mut lip_extension = 0.0f64;
    for z in queries {
        let loc = tri.locate(z)?;
        let vals = loc
            .vertices
            .iter()
            .map(|v| f.get(v).copied().ok_or_else(|| Error::MissingVertex(v.clone())))
            .collect::<Result<Vec<f64>>>()?;
        let value = if let Some(k) = loc.barycentric.iter().position(|&l| l == 1.0) {
            vals[k]
        } else {
            loc.barycentric.iter().zip(&vals).map(|(l, v)| l * v).sum()
        };
        let mut grad = vec![0.0; tri.dim];
        for (k, &axis) in loc.order.iter().enumerate() {
            grad[axis] = (vals[k + 1] - vals[k]) / h;
        }
        lip_extension = lip_extension.max(norm(&grad));
        values.push(value);
        gradients.push(grad);
    }
    let lip_vertices = vertex_lip(tri, f);
    let ratio = crate::math::ratio_or_one(lip_extension, lip_vertices);
    Ok(PlExtension { values, gradients, lip_extension, lip_vertices, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lattice(tri: &KuhnTriangulation, lo: i64, hi: i64, f: impl Fn(&[f64]) -> f64) -> LatticeField {
        let mut out = BTreeMap::new();
        let mut idx = vec![lo; tri.dim];
        loop {
            out.insert(idx.clone(), f(&tri.vertex_point(&idx)));
            let Some(k) = (0..tri.dim).find(|&k| idx[k] < hi) else { break };
            idx[k] += 1;
            for j in 0..k {
                idx[j] = lo;
            }
        }
        out
    }

    #[test]
    fn vertex_has_unit_weight() {
        let t = KuhnTriangulation::new(3, 2).unwrap();
        let loc = t.locate(&[0.25, -0.5, 1.0]).unwrap();
        assert_eq!(loc.barycentric, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(loc.vertices[0], vec![1, -2, 4]);
    }

    #[test]
    fn one_dimensional_interpolation() {
        let t = KuhnTriangulation::new(1, 0).unwrap();
        let loc = t.locate(&[0.25]).unwrap();
        assert_eq!(loc.vertices, vec![vec![0], vec![1]]);
        assert_eq!(loc.barycentric, vec![0.75, 0.25]);
    }

    #[test]
    fn two_dimensional_example() {
        let t = KuhnTriangulation::new(2, 0).unwrap();
        let z = [0.7, 0.2];
        let loc = t.locate(&z).unwrap();
        assert_eq!(loc.vertices, vec![vec![0, 0], vec![1, 0], vec![1, 1]]);
        for (l, o) in loc.barycentric.iter().zip([0.3, 0.5, 0.2]) {
            assert_abs_diff_eq!(*l, o, epsilon = 1e-15);
        }
        let rebuilt: Vec<f64> = (0..2)
            .map(|j| loc.vertices.iter().zip(&loc.barycentric).map(|(v, l)| l * v[j] as f64).sum())
            .collect();
        assert_abs_diff_eq!(rebuilt[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(rebuilt[1], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn ties_follow_coordinate_index() {
        let t = KuhnTriangulation::new(3, 0).unwrap();
        let loc = t.locate(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(loc.order, vec![0, 1, 2]);
    }

    #[test]
    fn cube_split_counts() {
        let t = KuhnTriangulation::new(3, 0).unwrap();
        let s = t.cube_simplices(&[0, 0, 0]);
        assert_eq!(s.len(), 6);
        for simplex in &s {
            assert_eq!(simplex.first().unwrap(), &vec![0, 0, 0]);
            assert_eq!(simplex.last().unwrap(), &vec![1, 1, 1]);
        }
        assert_eq!(permutations(4).len(), 24);
    }

    #[test]
    fn affine_data_is_reproduced() {
        let t = KuhnTriangulation::new(2, 1).unwrap();
        let f = lattice(&t, -4, 4, |p| 2.0 * p[0] - 3.0 * p[1] + 0.5);
        let queries = vec![vec![0.3, -0.7], vec![1.1, 0.05], vec![-1.2, 1.9]];
        let pl = pl_extend(&t, &f, &queries).unwrap();
        for (z, v) in queries.iter().zip(&pl.values) {
            assert_abs_diff_eq!(*v, 2.0 * z[0] - 3.0 * z[1] + 0.5, epsilon = 1e-12);
        }
        for g in &pl.gradients {
            assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g[1], -3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_data() {
        let t = KuhnTriangulation::new(2, 0).unwrap();
        let f = lattice(&t, 0, 2, |_| 4.0);
        let pl = pl_extend(&t, &f, &[vec![0.4, 1.3]]).unwrap();
        assert_eq!(pl.values, vec![4.0]);
        assert_eq!(pl.gradients, vec![vec![0.0, 0.0]]);
        assert_eq!(pl.ratio, 1.0);
    }

    #[test]
    fn gradient_exceeds_vertex_constant() {
        // Right simplex: solve the 2×2 system for the gradient directly.
        let g = affine_gradient(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], &[0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(norm(&g), 2f64.sqrt(), epsilon = 1e-15);
        // Same effect on a Kuhn simplex of the unit square.
        let t = KuhnTriangulation::new(2, 0).unwrap();
        let f: LatticeField =
            [(vec![0, 0], 0.0), (vec![1, 0], 1.0), (vec![0, 1], 1.0), (vec![1, 1], 0.0)].into_iter().collect();
        let pl = pl_extend(&t, &f, &[vec![0.6, 0.3]]).unwrap();
        assert_eq!(pl.lip_vertices, 1.0);
        assert_abs_diff_eq!(pl.ratio, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn missing_vertex_is_reported() {
        let t = KuhnTriangulation::new(2, 0).unwrap();
        let f: LatticeField = [(vec![0, 0], 0.0), (vec![1, 0], 1.0)].into_iter().collect();
        assert_eq!(pl_extend(&t, &f, &[vec![0.6, 0.3]]), Err(Error::MissingVertex(vec![1, 1])));
    }

    proptest! {
        #[test]
        fn barycentric_reproduces_point(z in proptest::collection::vec(-50.0f64..50.0, 1..5), level in -2i32..6) {
            let t = KuhnTriangulation::new(z.len(), level).unwrap();
            let loc = t.locate(&z).unwrap();
            prop_assert!(loc.barycentric.iter().all(|&l| (0.0..=1.0).contains(&l)));
            prop_assert!((loc.barycentric.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for j in 0..z.len() {
                let r: f64 = loc.vertices.iter().zip(&loc.barycentric).map(|(v, l)| l * t.vertex_point(v)[j]).sum();
                prop_assert!((r - z[j]).abs() <= 1e-12);
            }
        }

        #[test]
        fn kuhn_gradient_matches_linear_solve(values in proptest::collection::vec(-3.0f64..3.0, 27)) {
            let t = KuhnTriangulation::new(3, 1).unwrap();
            let mut f = LatticeField::new();
            for (k, v) in values.iter().enumerate() {
                f.insert(vec![(k % 3) as i64, ((k / 3) % 3) as i64, (k / 9) as i64], *v);
            }
            let mut queries = Vec::new();
            let mut simplices = Vec::new();
            for base in [[0, 0, 0], [1, 0, 1], [0, 1, 1]] {
                for s in t.cube_simplices(&base) {
                    let pts: Vec<Vec<f64>> = s.iter().map(|v| t.vertex_point(v)).collect();
                    let center: Vec<f64> = (0..3).map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / 4.0).collect();
                    queries.push(center);
                    simplices.push((pts, s));
                }
            }
            let pl = pl_extend(&t, &f, &queries).unwrap();
            for (k, (pts, s)) in simplices.iter().enumerate() {
                let vals: Vec<f64> = s.iter().map(|v| f[v]).collect();
                let g = affine_gradient(pts, &vals).unwrap();
                for j in 0..3 {
                    prop_assert!((g[j] - pl.gradients[k][j]).abs() <= 1e-9);
                }
                let mean = vals.iter().sum::<f64>() / 4.0;
                prop_assert!((pl.values[k] - mean).abs() <= 1e-12);
            }
        }

        #[test]
        fn extension_constant_dominates_vertex_constant(values in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let t = KuhnTriangulation::new(2, 0).unwrap();
            let mut f = LatticeField::new();
            for (k, v) in values.iter().enumerate() {
                f.insert(vec![(k % 4) as i64, (k / 4) as i64], *v);
            }
            let mut queries = Vec::new();
            for a in 0..3 {
                for b in 0..3 {
                    queries.push(vec![a as f64 + 0.7, b as f64 + 0.2]);
                    queries.push(vec![a as f64 + 0.2, b as f64 + 0.7]);
                }
            }
            let pl = pl_extend(&t, &f, &queries).unwrap();
            prop_assert!(pl.lip_extension >= pl.lip_vertices - 1e-12);
        }
    }
}
