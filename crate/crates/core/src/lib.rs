//! Multipatch isogeometric discretization of the diffusion equation with a symmetric
//! interior penalty discontinuous Galerkin coupling, and a dual-primal tearing and
//! interconnecting solver for the resulting system.

// `!(x > 0.0)` is used on purpose so that NaN is rejected as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod bspline;
pub mod error;
pub mod generators;
pub mod geometry;
pub mod ieti;
pub mod linalg;
pub mod norms;
pub mod quadrature;
pub mod schur;

pub use error::{Error, Result};
