//! Scalar fields (one real value per point) and polynomials acting on tuples
//! of fields.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::space::FiniteMetricMeasureSpace;
use crate::{Error, Result};

/// One finite real value per point of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(alloc::format!("non-finite field value at point {i}")));
        }
        Ok(ScalarField { values })
    }

    pub fn constant(len: usize, c: f64) -> Self {
        ScalarField { values: alloc::vec![c; len] }
    }

    pub fn from_fn(len: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..len).map(f).collect())
    }

    /// Evaluates `f` on the ambient coordinates of every point.
    pub fn from_coords(space: &FiniteMetricMeasureSpace, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let coords = space
            .coords()
            .ok_or_else(|| Error::invalid("space has no ambient coordinates"))?;
        Self::new(coords.iter().map(|c| f(c)).collect())
    }

    /// The `axis`-th ambient coordinate as a field.
    pub fn coordinate(space: &FiniteMetricMeasureSpace, axis: usize) -> Result<Self> {
        let dim = space.ambient_dim().ok_or_else(|| Error::invalid("space has no ambient coordinates"))?;
        if axis >= dim {
            return Err(Error::invalid(alloc::format!("axis {axis} out of range for dimension {dim}")));
        }
        Self::from_coords(space, |c| c[axis])
    }

    /// Distance to a fixed point, `y ↦ d(y, base)`.
    pub fn distance_to(space: &FiniteMetricMeasureSpace, base: usize) -> Result<Self> {
        space.check_point(base)?;
        Ok(ScalarField { values: space.distances_from(base) })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_len(&self, space: &FiniteMetricMeasureSpace) -> Result<()> {
        if self.values.len() != space.len() {
            return Err(Error::LengthMismatch { expected: space.len(), got: self.values.len() });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        ScalarField { values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    /// Sup-norm distance to another field.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `coeff · ∏ yᵢ^{exponents[i]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

/// A real polynomial in `n` variables, stored as a list of monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Polynomial { terms }
    }

    /// Number of variables the polynomial reads.
    pub fn arity(&self) -> usize {
        self.terms.iter().map(|t| t.exponents.len()).max().unwrap_or(0)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.exponents
                    .iter()
                    .enumerate()
                    .fold(t.coeff, |acc, (i, &e)| acc * ipow(y[i], e))
            })
            .sum()
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut g = alloc::vec![0.0; n];
        for t in &self.terms {
            for (k, gk) in g.iter_mut().enumerate().take(t.exponents.len()) {
                let ek = t.exponents[k];
                if ek == 0 {
                    continue;
                }
                let mut term = t.coeff * ek as f64;
                for (i, &e) in t.exponents.iter().enumerate() {
                    let e = if i == k { e - 1 } else { e };
                    term *= ipow(y[i], e);
                }
                *gk += term;
            }
        }
        g
    }

    /// `p ∘ (f₁, …, fₙ)` evaluated pointwise.
    pub fn compose(&self, fields: &[ScalarField]) -> Result<ScalarField> {
        if fields.len() < self.arity() {
            return Err(Error::invalid("polynomial reads more variables than fields supplied"));
        }
        let len = fields.first().map_or(0, |f| f.len());
        if fields.iter().any(|f| f.len() != len) {
            return Err(Error::invalid("fields have different lengths"));
        }
        let mut y = alloc::vec![0.0; fields.len()];
        ScalarField::from_fn(len, |i| {
            for (k, f) in fields.iter().enumerate() {
                y[k] = f.get(i);
            }
            self.eval(&y)
        })
    }
}

fn ipow(x: f64, e: u32) -> f64 {
    let mut acc = 1.0;
    for _ in 0..e {
        acc *= x;
    }
    acc
}
