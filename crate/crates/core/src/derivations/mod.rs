//! Discrete derivations: local difference operators
//! `δf(x) = Σ_y w_{x,y} (f(y) − f(x))` with neighbors in a closed ball.

mod jacobi;
mod pushforward;
mod rank;

pub use jacobi::{
    change_of_variables, default_rank_tol, jacobi_matrix, orthogonalize, pointwise_rank, ChangeOfVariables, JacobiField, OrthoPoint,
    OrthogonalBasisResult, RankReport,
};
pub use pushforward::{duality_residual, fiber_average, pushforward_derivation, pushforward_measure};
pub use rank::{budget_stencils, chain_rule_field, rank_bound_experiment, ChainRuleField, RankRow};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::field::ScalarField;
use crate::math::{dist, dot, norm};
use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

/// How each point picks its stencil neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    /// Forward difference along `+e_axis` (needs coordinates).
    CoordinateAxis { axis: usize },
    /// Forward difference along an arbitrary direction (needs coordinates).
    Direction { v: Vec<f64> },
    /// Difference toward the nearest other point.
    NearestNeighborDirection,
    /// Difference toward the `k`-th nearest net point (0-based) in the ball.
    NetDirection { net: Vec<usize>, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilDerivation {
    /// Support radius `h`.
    pub radius: f64,
    /// Per point, `(neighbor, weight)` pairs.
    pub stencils: Vec<Vec<(usize, f64)>>,
    /// Per point, `Σ_y |w_{x,y}| d(x, y)`.
    pub normalization: Vec<f64>,
}

/// Neighbors `y ≠ x` within the closed ball of radius `h`, with distances.
pub(crate) fn neighbor_lists(space: &FiniteMetricMeasureSpace, h: f64) -> Vec<Vec<(usize, f64)>> {
    let n = space.len();
    let mut out = vec![Vec::new(); n];
    for x in 0..n {
        for y in x + 1..n {
            let d = space.dist(x, y);
            if d <= h {
                out[x].push((y, d));
                out[y].push((x, d));
            }
        }
    }
    for list in &mut out {
        list.sort_by_key(|p| p.0);
    }
    out
}

pub fn build_stencil(space: &FiniteMetricMeasureSpace, scheme: &Scheme, h: f64) -> Result<StencilDerivation> {
    Ok(build_stencils(space, core::slice::from_ref(scheme), h)?.pop().unwrap())
}

/// Builds several stencils at the same radius, sharing the neighbor search.
pub fn build_stencils(space: &FiniteMetricMeasureSpace, schemes: &[Scheme], h: f64) -> Result<Vec<StencilDerivation>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid("stencil radius must be positive"));
    }
    for scheme in schemes {
        validate_scheme(space, scheme)?;
    }
    let neighbors = neighbor_lists(space, h);
    Ok(schemes
        .iter()
        .map(|scheme| {
            let stencils: Vec<Vec<(usize, f64)>> =
                (0..space.len()).map(|x| point_stencil(space, scheme, x, &neighbors[x])).collect();
            StencilDerivation::from_parts(space, h, stencils)
        })
        .collect())
}

fn validate_scheme(space: &FiniteMetricMeasureSpace, scheme: &Scheme) -> Result<()> {
    let dim = || space.ambient_dim().ok_or_else(|| Error::invalid("directional stencils need point coordinates"));
    match scheme {
        Scheme::CoordinateAxis { axis } => {
            if *axis >= dim()? {
                return Err(Error::invalid("axis out of range"));
            }
        }
        Scheme::Direction { v } => {
            if v.len() != dim()? {
                return Err(Error::LengthMismatch { expected: dim()?, got: v.len() });
            }
            if !(norm(v) > 0.0) {
                return Err(Error::invalid("direction must be nonzero"));
            }
        }
        Scheme::NearestNeighborDirection => {}
        Scheme::NetDirection { net, .. } => {
            for &p in net {
                space.check_point(p)?;
            }
        }
    }
    Ok(())
}

fn point_stencil(space: &FiniteMetricMeasureSpace, scheme: &Scheme, x: usize, nbrs: &[(usize, f64)]) -> Vec<(usize, f64)> {
    match scheme {
        Scheme::CoordinateAxis { axis } => {
            let mut v = vec![0.0; space.ambient_dim().unwrap()];
            v[*axis] = 1.0;
            directional(space, &v, x, nbrs)
        }
        Scheme::Direction { v } => directional(space, v, x, nbrs),
        Scheme::NearestNeighborDirection => nbrs
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|&(y, d)| vec![(y, 1.0 / d)])
            .unwrap_or_default(),
        Scheme::NetDirection { net, k } => {
            let mut cands: Vec<(usize, f64)> = nbrs.iter().copied().filter(|(y, _)| net.contains(y)).collect();
            cands.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            cands.get(*k).map(|&(y, d)| vec![(y, 1.0 / d)]).unwrap_or_default()
        }
    }
}

/// Best-aligned neighbor along `v` (farthest among equally aligned). With no
/// neighbor ahead, falls back to the best-aligned neighbor behind, giving a
/// backward difference.
fn directional(space: &FiniteMetricMeasureSpace, v: &[f64], x: usize, nbrs: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let coords = space.coords().unwrap();
    let vn = norm(v);
    let cx = &coords[x];
    let mut ahead: Option<(f64, f64, usize, f64)> = None;
    let mut behind: Option<(f64, f64, usize, f64)> = None;
    for &(y, d) in nbrs {
        let diff: Vec<f64> = coords[y].iter().zip(cx).map(|(a, b)| a - b).collect();
        let len = dist(&coords[y], cx);
        if len == 0.0 {
            continue;
        }
        let align = dot(&diff, v) / (len * vn);
        let slot = if align > 0.0 { &mut ahead } else if align < 0.0 { &mut behind } else { continue };
        let key = align.abs();
        let better = match slot {
            None => true,
            Some((a, l, _, _)) => key > *a + 1e-12 || (key >= *a - 1e-12 && len > *l),
        };
        if better {
            *slot = Some((key, len, y, d));
        }
    }
    if let Some((_, _, y, d)) = ahead {
        vec![(y, 1.0 / d)]
    } else if let Some((_, _, y, d)) = behind {
        vec![(y, -1.0 / d)]
    } else {
        Vec::new()
    }
}

impl StencilDerivation {
    pub fn from_parts(space: &FiniteMetricMeasureSpace, radius: f64, stencils: Vec<Vec<(usize, f64)>>) -> Self {
        let normalization = stencils
            .iter()
            .enumerate()
            .map(|(x, st)| st.iter().map(|&(y, w)| w.abs() * space.dist(x, y)).sum())
            .collect();
        StencilDerivation { radius, stencils, normalization }
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    /// Checks that every neighbor lies within the support radius.
    pub fn check_locality(&self, space: &FiniteMetricMeasureSpace) -> Result<()> {
        if self.len() != space.len() {
            return Err(Error::LengthMismatch { expected: space.len(), got: self.len() });
        }
        for (x, st) in self.stencils.iter().enumerate() {
            for &(y, w) in st {
                space.check_point(y)?;
                if y == x || space.dist(x, y) > self.radius || !w.is_finite() {
                    return Err(Error::invalid("stencil neighbor outside the support ball"));
                }
            }
        }
        Ok(())
    }

    pub fn apply_at(&self, f: &[f64], x: usize) -> f64 {
        let fx = f[x];
        self.stencils[x].iter().map(|&(y, w)| w * (f[y] - fx)).sum()
    }

    pub fn apply(&self, f: &ScalarField) -> Result<ScalarField> {
        if f.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: f.len() });
        }
        let v = f.values();
        ScalarField::from_fn(self.len(), |x| self.apply_at(v, x))
    }

    /// `λ · δ` for a pointwise factor `λ`.
    pub fn scale_by(&self, lambda: &ScalarField) -> Result<Self> {
        if lambda.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: lambda.len() });
        }
        let stencils = self
            .stencils
            .iter()
            .enumerate()
            .map(|(x, st)| st.iter().map(|&(y, w)| (y, w * lambda.get(x))).collect())
            .collect();
        let normalization = self.normalization.iter().enumerate().map(|(x, n)| n * lambda.get(x).abs()).collect();
        Ok(StencilDerivation { radius: self.radius, stencils, normalization })
    }

    /// `χ_A · δ`: the stencil is emptied outside the mask.
    pub fn restrict(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: mask.len() });
        }
        let mut out = self.clone();
        for (x, keep) in mask.iter().enumerate() {
            if !keep {
                out.stencils[x].clear();
                out.normalization[x] = 0.0;
            }
        }
        Ok(out)
    }

    /// `Σ_k c_k(x) δ_k` for pointwise coefficients.
    pub fn combine(space: &FiniteMetricMeasureSpace, parts: &[(&StencilDerivation, Vec<f64>)]) -> Result<Self> {
        let n = space.len();
        let mut radius = 0.0f64;
        let mut stencils = vec![Vec::<(usize, f64)>::new(); n];
        for (d, c) in parts {
            if d.len() != n || c.len() != n {
                return Err(Error::LengthMismatch { expected: n, got: d.len().min(c.len()) });
            }
            radius = radius.max(d.radius);
            for x in 0..n {
                for &(y, w) in &d.stencils[x] {
                    let w = w * c[x];
                    match stencils[x].iter_mut().find(|e| e.0 == y) {
                        Some(e) => e.1 += w,
                        None => stencils[x].push((y, w)),
                    }
                }
            }
        }
        for st in &mut stencils {
            st.retain(|e| e.1 != 0.0);
            st.sort_by_key(|e| e.0);
        }
        Ok(StencilDerivation::from_parts(space, radius, stencils))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeibnizDefect {
    /// `δ(fg) − f δg − g δf` at each point.
    pub defect: Vec<f64>,
    pub sup: f64,
}

pub fn leibniz_defect(delta: &StencilDerivation, f: &ScalarField, g: &ScalarField) -> Result<LeibnizDefect> {
    let fg = f.zip_with(g, |a, b| a * b);
    let (df, dg, dfg) = (delta.apply(f)?, delta.apply(g)?, delta.apply(&fg)?);
    let defect: Vec<f64> = (0..delta.len()).map(|x| dfg.get(x) - f.get(x) * dg.get(x) - g.get(x) * df.get(x)).collect();
    let sup = defect.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(LeibnizDefect { defect, sup })
}
