//! Lipschitz analysis on finite metric measure spaces.
//!
//! The crate is `no_std` with `alloc`. Everything here is a pure function of
//! immutable inputs: spaces, scalar fields, stencil derivations and the small
//! dense matrices built from them. File formats, experiments and the command
//! line live in the companion `lipcalc` crate.
//!
//! Module map:
//!
//! - [`space`]: finite metric measure spaces, balls, doubling statistics and
//!   generators for grids, snowflakes and self-similar sets.
//! - [`lipschitz`] and [`hajlasz`]: global and pointwise Lipschitz constants,
//!   McShane extension, weak-* checks and minimal Hajłasz gradients.
//! - [`nets`] and [`kuhn`]: ε-nets, piecewise-distance approximation and PL
//!   extension over dyadic Kuhn triangulations.
//! - [`derivations`]: stencil derivations, Jacobi fields, cofactor
//!   orthogonalization, pushforwards and rank experiments.
//! - [`differentiability`]: charts, differentials and residual profiles.
//! - [`embedding`]: Assouad snowflake embeddings and composite approximation.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod derivations;
pub mod differentiability;
pub mod embedding;
mod error;
pub mod field;
pub mod hajlasz;
pub mod kuhn;
pub mod linalg;
pub mod lipschitz;
pub mod math;
pub mod nets;
pub mod space;

pub use error::{Error, Result};
pub use field::{Monomial, Polynomial, ScalarField};
pub use space::{FiniteMetricMeasureSpace, SpaceSpec};

/// Fraction of μ-mass treated as negligible when a statement is meant to hold
/// "almost everywhere" on a finite space.
pub const NULL_MASS_FRACTION: f64 = 1e-3;
