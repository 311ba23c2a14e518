//! Reference filters run on the same trajectories as the TT solver: a
//! particle filter with the observation-increment proposal and an extended
//! Kalman filter, both aware of the state/observation noise correlation.

pub mod ekf;
pub mod pf;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filter::rmse;
use crate::sde::TrajectoryRecord;

pub use ekf::{ekf_step, run_ekf, GaussianBelief, EKF_TRACE_LIMIT};
pub use pf::{pf_init, pf_step, run_pf, run_pf_observed, systematic_resample, ParticleEnsemble, PfConfig, PfStep};

/// Point estimates of a baseline filter, one per coarse time (index 0 is the prior).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub means: Vec<Vec<f64>>,
    pub online_seconds: f64,
    /// Resampling events (particle filter only).
    pub resamples: usize,
}

impl BaselineRun {
    /// Tracking RMSE over `τ_1..τ_{N_T}`, same convention as the TT filter.
    pub fn rmse(&self, truth: &TrajectoryRecord) -> Result<f64> {
        rmse(&self.means[1..], &truth.states[1..])
    }
}
