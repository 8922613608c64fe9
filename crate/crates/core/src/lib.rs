//! Mixed-integer differentiable predictive control for multi-chiller plants.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod diffengine;
pub mod error;
pub mod harness;
pub mod plant;
pub mod policy;
pub mod scenario;
pub mod trainer;

pub use error::{Error, Result};
