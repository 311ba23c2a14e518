//! Ground-truth simulation of the correlated signal/observation system.

pub mod integrals;
pub mod sim;

pub use integrals::{iterated_integrals_product, iterated_integrals_refined};
pub use sim::{sample_initial, simulate_fine, simulate_truth, trial_rng, FinePath, InitialState, PathConfig, TrajectoryRecord};
