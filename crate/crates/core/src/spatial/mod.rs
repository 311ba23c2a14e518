//! Grids, symbolic coefficient fields, and TT assembly of the finite-difference generator.

pub mod assemble;
pub mod cache;
pub mod fd;
pub mod field;
pub mod grid;
pub mod model;

pub use assemble::{assemble_mixed_operators, assemble_operators, diag_of_field, Advection, AssemblyConfig, DiscretizedOperators};
pub use fd::{central_diff, forward_diff, lift_1d, Mat1};
pub use field::{Atom, FieldMatrix, SeparableField, Term};
pub use grid::Grid;
pub use model::SignalModel;
