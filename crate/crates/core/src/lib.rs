//! Numerical laboratory for convex functionals with (p,q)-growth.
//!
//! The crate builds the pieces of a boundary-adapted approximation scheme on
//! two-dimensional polygonal domains:
//!
//! * [`geometry`]: polygons, signed distance, Cartesian grids and fields.
//! * [`cover`]: Whitney-Besicovitch ball coverings with certified constants.
//! * [`partition`]: cutoffs and the partition of unity subordinate to a covering.
//! * [`smoothing`]: mollification, the two-parameter smoothing operator with
//!   its gradient split, truncation and star-shaped rescaling.
//! * [`integrands`]: energy densities, quadrature energies, hypothesis audits
//!   and the exponent-range classifier.
//! * [`experiments`]: the discrete minimizer, convergence runs, gap probes and
//!   classifier sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cover;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod integrands;
pub mod partition;
pub mod smoothing;
pub mod util;

pub use error::{Error, Result};
