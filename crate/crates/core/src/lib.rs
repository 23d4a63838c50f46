//! Multi-parameter dyadic harmonic analysis on finite product grids.
//!
//! Grids, Haar systems, weights, maximal and square functions, product BMO
//! norms, paraproducts and commutator decompositions, plus an experiment
//! harness that checks the resulting inequalities numerically.

pub mod bmo;
pub mod commutators;
pub mod error;
pub mod haar;
pub mod harness;
pub mod lattice;
pub mod maximal_square;
pub mod paraproducts;
pub mod pyramid;
pub mod rng;
pub mod weights;

pub use error::{Error, Result};
