//! File formats, experiment registry and run manifests around
//! [`lipcalc_core`]. The `lipcalc` binary is a thin command-line layer over
//! this crate.

pub mod experiments;
pub mod io;
pub mod oracles;
pub mod stats;

pub use lipcalc_core as core;
