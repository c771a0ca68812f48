//! Simulation and verification of Euler-emulated, observer-based
//! sampled-data feedback for nonlinear time-delay systems.

// `!(x < y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod engine;
pub mod error;
pub mod history;
pub mod lkf;
pub mod models;
pub mod sampled;
pub mod scenario;

pub use error::{Error, Result};
