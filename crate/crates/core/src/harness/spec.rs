//! Experiment configuration: a TOML file with one section per experiment
//! family. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::IntegralMode;
use crate::spatial::{Advection, SignalModel};

/// Trials used by `--paper-scale` unless set explicitly.
pub const PAPER_SCALE_TRIALS: usize = 100;
/// Largest cubic-sensor dimension accepted without `--paper-scale`.
pub const DESK_MAX_DIM: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Table1,
    Cubic,
    Multimode,
    SpatialOrder,
    TemporalOrder,
    TtAccuracy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Table1 => "table1",
            ExperimentKind::Cubic => "cubic",
            ExperimentKind::Multimode => "multimode",
            ExperimentKind::SpatialOrder => "spatial_order",
            ExperimentKind::TemporalOrder => "temporal_order",
            ExperimentKind::TtAccuracy => "tt_accuracy",
        }
    }

    pub fn is_convergence(self) -> bool {
        matches!(
            self,
            ExperimentKind::SpatialOrder | ExperimentKind::TemporalOrder | ExperimentKind::TtAccuracy
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    /// Trials (tracking) or noise paths (convergence); unused by `table1`.
    #[serde(default)]
    pub trials: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Size of the trial worker pool.
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub paper_scale: bool,
    pub table1: Option<Table1Config>,
    pub tracking: Option<TrackingConfig>,
    pub convergence: Option<ConvergenceConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Config {
    pub dims: Vec<usize>,
    pub dofs: Vec<usize>,
    #[serde(default = "unit")]
    pub half_width: f64,
    pub delta: f64,
    #[serde(default = "ns_tol")]
    pub tol: f64,
    pub eps_round: f64,
    #[serde(default = "ns_max_iter")]
    pub max_iter: usize,
    #[serde(default = "ns_rank_cap")]
    pub rank_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingConfig {
    /// State dimension (the multi-mode model is four-dimensional).
    pub dim: usize,
    pub half_width: f64,
    pub n: usize,
    pub t_end: f64,
    pub delta: f64,
    /// Fine simulation steps per filter step.
    #[serde(default = "substeps")]
    pub substeps: usize,
    pub eps_tt: f64,
    pub eps_round: Option<f64>,
    #[serde(default)]
    pub advection: Advection,
    /// Prior `N(init_mean, init_std²)` per coordinate, shared by truth and filters.
    #[serde(default)]
    pub init_mean: f64,
    pub init_std: f64,
    #[serde(default = "yes")]
    pub tt: bool,
    #[serde(default)]
    pub pf_particles: Vec<usize>,
    #[serde(default)]
    pub ekf: bool,
    /// Marginal snapshot period in filter steps (0 = none).
    #[serde(default)]
    pub snapshot_every: usize,
    /// Bimodality counts local maxima holding at least this share of the peak.
    #[serde(default = "peak_share")]
    pub peak_share: f64,
    /// Bimodality is scored on snapshots after this time.
    #[serde(default = "two")]
    pub bimodal_after: f64,
    /// Trials whose estimates are kept for plot data.
    #[serde(default = "first_trial")]
    pub plot_trials: Vec<u64>,
    /// Offline operator cache.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelPreset {
    Smooth1,
    Smooth2,
}

impl ModelPreset {
    pub fn model(self) -> SignalModel {
        match self {
            ModelPreset::Smooth1 => SignalModel::smooth_1d(),
            ModelPreset::Smooth2 => SignalModel::smooth_2d(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub model: ModelPreset,
    pub half_width: f64,
    /// Grid size (ignored by the spatial sweep, which varies it).
    #[serde(default = "conv_n")]
    pub n: usize,
    pub t_end: f64,
    /// Filter step (ignored by the temporal sweep, which varies it).
    #[serde(default = "conv_delta")]
    pub delta: f64,
    /// Fine simulation steps per step of the finest level.
    #[serde(default = "substeps")]
    pub substeps: usize,
    /// Swept values: `N`, `δ` or `eps_tt`, depending on the kind.
    pub levels: Vec<f64>,
    /// Value of the swept parameter for the reference solution.
    pub reference: f64,
    /// TT tolerance for the spatial and temporal sweeps.
    #[serde(default = "conv_eps")]
    pub eps_tt: f64,
    /// Iterated-integral approximations compared by the temporal sweep.
    #[serde(default = "both_modes")]
    pub integral_modes: Vec<IntegralMode>,
    #[serde(default)]
    pub init_mean: f64,
    pub init_std: f64,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}
fn ns_tol() -> f64 {
    5e-5
}
fn ns_max_iter() -> usize {
    100
}
fn ns_rank_cap() -> usize {
    256
}
fn substeps() -> usize {
    16
}
fn peak_share() -> f64 {
    0.2
}
fn first_trial() -> Vec<u64> {
    vec![0]
}
fn conv_n() -> usize {
    32
}
fn conv_delta() -> f64 {
    0.01
}
fn conv_eps() -> f64 {
    1e-12
}
fn both_modes() -> Vec<IntegralMode> {
    vec![IntegralMode::Refined, IntegralMode::Product]
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Number of steps of size `delta` in `t_end`, if it is a whole number.
pub(crate) fn whole_steps(t_end: f64, delta: f64) -> Option<usize> {
    if !(t_end > 0.0 && delta > 0.0) {
        return None;
    }
    let r = t_end / delta;
    let k = r.round();
    ((r - k).abs() <= 1e-9 * r.max(1.0) && k >= 1.0).then_some(k as usize)
}

/// Whether `coarse = fine · 2^k` for some `k ≥ 0`.
pub(crate) fn dyadic_ratio(coarse: f64, fine: f64) -> Option<usize> {
    let r = coarse / fine;
    let k = r.log2().round();
    (k >= 0.0 && (r - 2f64.powi(k as i32)).abs() <= 1e-9 * r).then(|| 1usize << k as u32)
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Applies command-line overrides; `--paper-scale` raises the trial count
    /// to the published one unless `trials` is given.
    pub fn apply_overrides(&mut self, seed: Option<u64>, trials: Option<usize>, out: Option<PathBuf>, paper_scale: bool) {
        if let Some(s) = seed {
            self.seed = s;
        }
        if paper_scale {
            self.paper_scale = true;
            if matches!(self.kind, ExperimentKind::Cubic | ExperimentKind::Multimode) {
                self.trials = PAPER_SCALE_TRIALS;
            }
        }
        if let Some(t) = trials {
            self.trials = t;
        }
        if let Some(o) = out {
            self.output_dir = o;
        }
    }

    /// Consistency checks, run before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(invalid("workers must be at least 1"));
        }
        let sections = [
            self.table1.is_some(),
            self.tracking.is_some(),
            self.convergence.is_some(),
        ];
        let wanted = match self.kind {
            ExperimentKind::Table1 => 0,
            ExperimentKind::Cubic | ExperimentKind::Multimode => 1,
            _ => 2,
        };
        let names = ["table1", "tracking", "convergence"];
        for (i, present) in sections.iter().enumerate() {
            if i == wanted && !present {
                return Err(invalid(format!("kind {} needs a [{}] section", self.kind.name(), names[i])));
            }
            if i != wanted && *present {
                return Err(invalid(format!("kind {} does not use a [{}] section", self.kind.name(), names[i])));
            }
        }
        match self.kind {
            ExperimentKind::Table1 => self.table1.as_ref().expect("checked").validate(),
            ExperimentKind::Cubic | ExperimentKind::Multimode => {
                self.tracking.as_ref().expect("checked").validate(self.kind, self.paper_scale)
            }
            kind => {
                let c = self.convergence.as_ref().expect("checked");
                if self.trials == 0 {
                    return Err(invalid("convergence studies need at least one noise path"));
                }
                c.validate(kind)
            }
        }
    }
}

impl Table1Config {
    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dofs.is_empty() {
            return Err(invalid("table1 needs at least one dimension and one DOF"));
        }
        if let Some(d) = self.dims.iter().find(|d| ![2, 4, 6, 8].contains(*d)) {
            return Err(invalid(format!("table1 dimension {d} not in {{2, 4, 6, 8}}")));
        }
        if let Some(n) = self.dofs.iter().find(|n| ![10, 20, 40, 60].contains(*n)) {
            return Err(invalid(format!("table1 DOF {n} not in {{10, 20, 40, 60}}")));
        }
        if !(self.half_width > 0.0 && self.delta > 0.0 && self.tol > 0.0 && self.eps_round > 0.0) {
            return Err(invalid("table1 half_width, delta, tol and eps_round must be positive"));
        }
        if self.max_iter == 0 || self.rank_cap == 0 {
            return Err(invalid("table1 max_iter and rank_cap must be positive"));
        }
        Ok(())
    }
}

impl TrackingConfig {
    pub fn eps_round(&self) -> f64 {
        self.eps_round.unwrap_or(self.eps_tt)
    }

    fn validate(&self, kind: ExperimentKind, paper_scale: bool) -> Result<()> {
        if kind == ExperimentKind::Multimode && self.dim != 4 {
            return Err(invalid("the multi-mode model is four-dimensional"));
        }
        if self.dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if kind == ExperimentKind::Cubic && self.dim > DESK_MAX_DIM && !paper_scale {
            return Err(invalid(format!(
                "cubic dimension {} exceeds the desk-scale limit {DESK_MAX_DIM}; pass --paper-scale",
                self.dim
            )));
        }
        if self.n < 2 || !(self.half_width > 0.0) {
            return Err(invalid("grid needs n >= 2 and a positive half-width"));
        }
        if whole_steps(self.t_end, self.delta).is_none() {
            return Err(invalid(format!("delta {} does not divide t_end {}", self.delta, self.t_end)));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps must be positive"));
        }
        if !(self.eps_tt > 0.0) || !(self.eps_round() > 0.0) {
            return Err(invalid("TT tolerances must be positive"));
        }
        if !(self.init_std > 0.0) {
            return Err(invalid("init_std must be positive"));
        }
        if self.pf_particles.contains(&0) {
            return Err(invalid("particle counts must be positive"));
        }
        if !self.tt && self.pf_particles.is_empty() && !self.ekf {
            return Err(invalid("no method selected"));
        }
        if !(0.0..=1.0).contains(&self.peak_share) {
            return Err(invalid("peak_share must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl ConvergenceConfig {
    /// Grid sizes of the spatial sweep.
    pub fn grid_levels(&self) -> Vec<usize> {
        self.levels.iter().map(|&v| v as usize).collect()
    }

    fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.levels.len() < 3 {
            return Err(invalid(format!("need at least 3 levels for a slope fit, got {}", self.levels.len())));
        }
        if !(self.half_width > 0.0) || !(self.init_std > 0.0) || !(self.eps_tt > 0.0) || self.substeps == 0 {
            return Err(invalid("half_width, init_std, eps_tt and substeps must be positive"));
        }
        let dim = self.model.model().dim();
        match kind {
            ExperimentKind::SpatialOrder => {
                let all = self.levels.iter().chain([&self.reference]);
                if all.clone().any(|&v| v.fract() != 0.0 || v < 4.0) {
                    return Err(invalid("spatial levels and reference must be whole grid sizes >= 4"));
                }
                if self.levels.iter().any(|&v| v >= self.reference) {
                    return Err(invalid("the reference grid must be finer than every level"));
                }
                if whole_steps(self.t_end, self.delta).is_none() {
                    return Err(invalid("delta must divide t_end"));
                }
            }
            ExperimentKind::TemporalOrder => {
                if self.integral_modes.is_empty() {
                    return Err(invalid("temporal sweep needs at least one integral mode"));
                }
                if dim != 1 && self.integral_modes.contains(&IntegralMode::Product) {
                    log::warn!("product integrals in d > 1 limit the temporal order to 1/2");
                }
                if whole_steps(self.t_end, self.reference).is_none() {
                    return Err(invalid("the reference step must divide t_end"));
                }
                for &l in &self.levels {
                    if l <= self.reference || dyadic_ratio(l, self.reference).is_none() {
                        return Err(invalid(format!("level {l} is not a power-of-two multiple of the reference step")));
                    }
                    if whole_steps(self.t_end, l).is_none() {
                        return Err(invalid(format!("step {l} does not divide t_end")));
                    }
                }
            }
            ExperimentKind::TtAccuracy => {
                if dim < 2 {
                    return Err(invalid("TT truncation needs d >= 2"));
                }
                if self.levels.iter().chain([&self.reference]).any(|&v| !(v > 0.0)) {
                    return Err(invalid("TT tolerances must be positive"));
                }
                if self.levels.iter().any(|&v| v <= self.reference) {
                    return Err(invalid("the reference tolerance must be tighter than every level"));
                }
                if whole_steps(self.t_end, self.delta).is_none() {
                    return Err(invalid("delta must divide t_end"));
                }
            }
            _ => unreachable!("not a convergence kind"),
        }
        Ok(())
    }
}
