//! Plane-wave Bloch bands, operator-domain correction terms and Berry curvature.
//!
//! Natural units (hbar = m = e = c = 1) are used throughout.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adiabatic;
pub mod cli;
pub mod curvature;
pub mod delta;
pub mod elements;
pub mod error;
pub mod model;
pub mod presets;
pub mod quadrature;
pub mod solver;
pub mod wave;

pub use error::{Error, Result};
