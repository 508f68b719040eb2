use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{random_unit_points, FiniteMetricMeasureSpace, SpaceWarning};
use crate::{math, Error, Result};

/// Similarity map `x ↦ ratio · (rotation · x) + translation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similitude {
    pub ratio: f64,
    /// Orthogonal matrix, identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<Vec<f64>>>,
    pub translation: Vec<f64>,
}

impl Similitude {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.translation.len();
        (0..dim)
            .map(|i| {
                let rx = match &self.rotation {
                    Some(r) => math::dot(&r[i], x),
                    None => x[i],
                };
                self.ratio * rx + self.translation[i]
            })
            .collect()
    }
}

/// Declarative description of a space, serialized as a tagged JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpaceSpec {
    /// Lattice `{lo, lo + step, …, hi}^dim` with uniform weights; the last
    /// axis varies fastest.
    EuclideanGrid { dim: usize, lo: f64, hi: f64, step: f64 },
    /// Path graph `0 – 1 – … – (n−1)` with constant edge length.
    PathGraph {
        n: usize,
        #[serde(default = "one")]
        edge: f64,
    },
    /// Base space with `d` replaced by `d^s`.
    Snowflake { base: Box<SpaceSpec>, s: f64 },
    /// Attractor of `{S_j}` sampled at one point per address word of length
    /// `depth`, with product weights.
    CantorIfs {
        maps: Vec<Similitude>,
        depth: u32,
        /// Branch masses, uniform when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        masses: Option<Vec<f64>>,
    },
    SierpinskiCarpet { depth: u32 },
    /// Uniform random points in the unit cube.
    RandomPoints { n: usize, dim: usize, seed: u64 },
    /// Explicit distance matrix.
    Matrix { ids: Vec<String>, distances: Vec<Vec<f64>>, weights: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl SpaceSpec {
    /// Middle-thirds Cantor set, `S₀(x) = x/3`, `S₁(x) = x/3 + 2/3`.
    pub fn middle_thirds(depth: u32) -> Self {
        SpaceSpec::CantorIfs {
            maps: vec![
                Similitude { ratio: 1.0 / 3.0, rotation: None, translation: vec![0.0] },
                Similitude { ratio: 1.0 / 3.0, rotation: None, translation: vec![2.0 / 3.0] },
            ],
            depth,
            masses: None,
        }
    }

    pub fn grid_1d(lo: f64, hi: f64, step: f64) -> Self {
        SpaceSpec::EuclideanGrid { dim: 1, lo, hi, step }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SpaceSpec::EuclideanGrid { dim, lo, hi, step } => {
                if *dim == 0 {
                    return Err(Error::invalid("grid dimension must be at least 1"));
                }
                if !(step.is_finite() && *step > 0.0 && hi >= lo && lo.is_finite() && hi.is_finite()) {
                    return Err(Error::invalid("grid needs finite lo ≤ hi and step > 0"));
                }
            }
            SpaceSpec::PathGraph { n, edge } => {
                if *n == 0 || !(edge.is_finite() && *edge > 0.0) {
                    return Err(Error::invalid("path graph needs n ≥ 1 and a positive edge length"));
                }
            }
            SpaceSpec::Snowflake { base, s } => {
                if !(*s > 0.0 && *s < 1.0) {
                    return Err(Error::invalid(format!("snowflake exponent {s} not in (0,1)")));
                }
                base.validate()?;
            }
            SpaceSpec::CantorIfs { maps, masses, .. } => {
                if maps.is_empty() {
                    return Err(Error::invalid("IFS needs at least one map"));
                }
                let dim = maps[0].translation.len();
                for (j, m) in maps.iter().enumerate() {
                    if !(m.ratio > 0.0 && m.ratio < 1.0) {
                        return Err(Error::invalid(format!("map {j}: ratio {} not in (0,1)", m.ratio)));
                    }
                    if m.translation.len() != dim || dim == 0 {
                        return Err(Error::invalid(format!("map {j}: translation has wrong dimension")));
                    }
                    if let Some(r) = &m.rotation {
                        if r.len() != dim || r.iter().any(|row| row.len() != dim) {
                            return Err(Error::invalid(format!("map {j}: rotation must be {dim}×{dim}")));
                        }
                    }
                }
                if let Some(p) = masses {
                    if p.len() != maps.len() || p.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                        return Err(Error::invalid("IFS masses must be positive, one per map"));
                    }
                }
            }
            SpaceSpec::SierpinskiCarpet { .. } => {}
            SpaceSpec::RandomPoints { n, dim, .. } => {
                if *n == 0 || *dim == 0 {
                    return Err(Error::invalid("random points need n ≥ 1 and dim ≥ 1"));
                }
            }
            SpaceSpec::Matrix { .. } => {}
        }
        Ok(())
    }
}

/// Materializes a [`SpaceSpec`]. Deterministic for a fixed spec.
pub fn generate_space(spec: &SpaceSpec) -> Result<FiniteMetricMeasureSpace> {
    spec.validate()?;
    match spec {
        SpaceSpec::EuclideanGrid { dim, lo, hi, step } => {
            let per_axis = math::round((hi - lo) / step) as usize + 1;
            let total = per_axis
                .checked_pow(*dim as u32)
                .ok_or_else(|| Error::invalid("grid too large"))?;
            let mut lattice = Vec::with_capacity(total);
            let mut coords = Vec::with_capacity(total);
            let mut idx = vec![0usize; *dim];
            for _ in 0..total {
                lattice.push(idx.iter().map(|&k| k as f64).collect());
                coords.push(idx.iter().map(|&k| lo + k as f64 * step).collect());
                for a in (0..*dim).rev() {
                    idx[a] += 1;
                    if idx[a] < per_axis {
                        break;
                    }
                    idx[a] = 0;
                }
            }
            let w = vec![1.0 / total as f64; total];
            FiniteMetricMeasureSpace::assemble(lattice, *step, coords, w)
        }
        SpaceSpec::PathGraph { n, edge } => {
            let lattice: Vec<Vec<f64>> = (0..*n).map(|i| vec![i as f64]).collect();
            let coords = (0..*n).map(|i| vec![i as f64 * edge]).collect();
            FiniteMetricMeasureSpace::assemble(lattice, *edge, coords, vec![1.0 / *n as f64; *n])
        }
        SpaceSpec::Snowflake { base, s } => generate_space(base)?.snowflake(*s),
        SpaceSpec::CantorIfs { maps, depth, masses } => ifs_space(maps, *depth, masses.as_deref()),
        SpaceSpec::SierpinskiCarpet { depth } => {
            let mut maps = Vec::with_capacity(8);
            for i in 0..3 {
                for j in 0..3 {
                    if i == 1 && j == 1 {
                        continue;
                    }
                    maps.push(Similitude {
                        ratio: 1.0 / 3.0,
                        rotation: None,
                        translation: vec![i as f64 / 3.0, j as f64 / 3.0],
                    });
                }
            }
            ifs_space(&maps, *depth, None)
        }
        SpaceSpec::RandomPoints { n, dim, seed } => {
            let pts = random_unit_points(*n, *dim, *seed);
            let (pts, w, merged) = merge_coincident(pts, vec![1.0 / *n as f64; *n]);
            let mut s = FiniteMetricMeasureSpace::assemble(pts.clone(), 1.0, pts, w)?;
            if merged > 0 {
                s.push_warning(SpaceWarning::MergedCoincidentPoints { count: merged });
            }
            Ok(s)
        }
        SpaceSpec::Matrix { ids, distances, weights } => {
            FiniteMetricMeasureSpace::from_distance_matrix(ids.clone(), distances.clone(), weights.clone())
        }
    }
}

fn ifs_space(maps: &[Similitude], depth: u32, masses: Option<&[f64]>) -> Result<FiniteMetricMeasureSpace> {
    let k = maps.len();
    let dim = maps[0].translation.len();
    let mass: Vec<f64> = match masses {
        Some(p) => {
            let total: f64 = p.iter().sum();
            p.iter().map(|w| w / total).collect()
        }
        None => vec![1.0 / k as f64; k],
    };
    let count = k
        .checked_pow(depth)
        .filter(|&c| c <= 1 << 24)
        .ok_or_else(|| Error::invalid("IFS depth too large"))?;
    // Level-by-level: the point for address w₁…w_d is S_{w₁} ∘ … ∘ S_{w_d}(0).
    let mut points: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    let mut weights = vec![1.0];
    let mut branch = vec![0usize];
    for level in 0..depth {
        let mut next_p = Vec::with_capacity(points.len() * k);
        let mut next_w = Vec::with_capacity(points.len() * k);
        let mut next_b = Vec::with_capacity(points.len() * k);
        for (j, m) in maps.iter().enumerate() {
            for (p, w) in points.iter().zip(&weights) {
                next_p.push(m.apply(p));
                next_w.push(w * mass[j]);
                next_b.push(j);
            }
        }
        points = next_p;
        weights = next_w;
        if level + 1 == depth {
            branch = next_b;
        }
    }
    debug_assert_eq!(points.len(), count);

    let mut warnings = Vec::new();
    if depth > 0 {
        // Bounding boxes of the first-level pieces; a positive-volume
        // intersection means the pieces overlap.
        let mut lo = vec![vec![f64::INFINITY; dim]; k];
        let mut hi = vec![vec![f64::NEG_INFINITY; dim]; k];
        for (p, &b) in points.iter().zip(&branch) {
            for a in 0..dim {
                lo[b][a] = lo[b][a].min(p[a]);
                hi[b][a] = hi[b][a].max(p[a]);
            }
        }
        for i in 0..k {
            for j in i + 1..k {
                let overlap = (0..dim).all(|a| lo[i][a].max(lo[j][a]) < hi[i][a].min(hi[j][a]));
                if overlap {
                    warnings.push(SpaceWarning::OverlappingPieces { first: i, second: j });
                }
            }
        }
    }
    let (points, weights, merged) = merge_coincident(points, weights);
    if merged > 0 {
        warnings.push(SpaceWarning::MergedCoincidentPoints { count: merged });
    }
    let mut space = FiniteMetricMeasureSpace::assemble(points.clone(), 1.0, points, weights)?;
    for w in warnings {
        space.push_warning(w);
    }
    Ok(space)
}

/// Merges exactly coincident points, summing their weights. Returns the number
/// of points removed.
fn merge_coincident(points: Vec<Vec<f64>>, weights: Vec<f64>) -> (Vec<Vec<f64>>, Vec<f64>, usize) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut keep = vec![true; points.len()];
    let mut extra = vec![0.0; points.len()];
    let mut merged = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && points[order[j]] == points[order[i]] {
            keep[order[j]] = false;
            extra[order[i]] += weights[order[j]];
            merged += 1;
            j += 1;
        }
        i = j;
    }
    if merged == 0 {
        return (points, weights, 0);
    }
    let mut p_out = Vec::with_capacity(points.len() - merged);
    let mut w_out = Vec::with_capacity(points.len() - merged);
    for (idx, p) in points.into_iter().enumerate() {
        if keep[idx] {
            p_out.push(p);
            w_out.push(weights[idx] + extra[idx]);
        }
    }
    (p_out, w_out, merged)
}
