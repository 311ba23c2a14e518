//! Online stage: semi-implicit Milstein stepping of the discretized density,
//! statistics extraction and error metrics.

pub mod estimate;
pub mod run;
pub mod state;

pub use estimate::{extract_estimate, local_maxima, reflection_asymmetry, rmse, Estimate};
pub use run::{negativity, run_filter, write_marginal_csv, FilterRun, StepDiagnostics};
pub use state::{
    explicit_part, init_filter, milstein_step, scaled_norm, FilterConfig, FilterState, InitDensity, IntegralMode, StepPath,
};
