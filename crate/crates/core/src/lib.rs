//! Attitude and angular-rate estimation on SO(3).
// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filters;
pub mod harness;
pub mod integrator;
pub mod model;
pub mod so3;

pub use error::{Error, Result};
