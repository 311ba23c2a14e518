//! Tensor-train solver for the Zakai filtering equation with correlated
//! state/observation noise, plus the simulation and baseline tooling around it.

// `!(x > 0.0)` is the NaN-rejecting form used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod filter;
pub mod harness;
pub mod linalg;
pub mod sde;
pub mod spatial;
pub mod tt;

pub use error::{Error, Result};
