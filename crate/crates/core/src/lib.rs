//! Normalized solitary waves of a nonlinear Dirac equation on a periodic box.
// `!(x > 0.0)` rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod constants;
pub mod dirac;
pub mod error;
pub mod field;
pub mod maximizer;
pub mod minimizer;
pub mod nonlinearity;
pub mod verify;

pub use error::{Error, Result};
