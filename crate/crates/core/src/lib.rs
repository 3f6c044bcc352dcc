// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// reference constants are quoted to full published precision
#![allow(clippy::excessive_precision)]

pub mod analysis;
pub mod analytic;
pub mod error;
pub mod experiments;
pub mod hamiltonian;
pub mod noise;
pub mod propagator;
pub mod qcore;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
