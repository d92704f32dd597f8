//! Reaction-diffusion systems with θ-diffusion on the unit interval:
//! discretization, IMEX simulation, and spatially-decomposed contraction
//! certificates.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certificates;
pub mod diffusion;
pub mod error;
pub mod grid;
pub mod models;
pub mod simulator;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{GridRef, ScalarField, SpatialGrid};
