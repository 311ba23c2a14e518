//! Tensor-train vectors and operators.

pub mod dense;
pub mod io;
pub mod matrix;
pub mod newton_schulz;
pub mod ops;
pub mod vector;

pub use dense::{DenseTensor, DEFAULT_DENSE_CAP};
pub use matrix::TtMatrix;
pub use newton_schulz::{inverse_residual, newton_schulz_inverse, NewtonSchulzConfig, NewtonSchulzReport};
pub use ops::{matmat_round, matvec_round};
pub use vector::{Core3, TtVector};
