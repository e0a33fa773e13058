//! Sharp bounds on the distribution of treatment effects, F(δ) = Pr(Y1 − Y0 ≤ δ),
//! from two fixed marginals under optional support restrictions, with a
//! discrete optimal-transport oracle for verification.

// NaN-rejecting checks are written as !(x > 0.0) on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod chain;
pub mod cli;
pub mod distributions;
pub mod estimation;
pub mod error;
pub mod makarov;
pub mod mtr;
pub mod numeric;
pub mod oracle;
pub mod restriction;
pub mod roy;
pub mod shape;

pub use error::{Error, Result};
