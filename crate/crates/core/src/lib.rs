//! Thermalization of a uniformly accelerated two-level detector coupled to a scalar field.
//!
//! Units ħ = c = k_B = 1; the Unruh inverse temperature is β = 2π/a.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod formfactor;
pub mod kinematics;
pub mod quadrature;
pub mod rates;
pub mod resonances;

pub use error::{Error, Result};
