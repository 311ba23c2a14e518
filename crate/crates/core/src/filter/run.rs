use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::estimate::{extract_estimate, rmse, Estimate};
use crate::filter::state::{init_filter, milstein_step, FilterConfig, FilterState, IntegralMode};
use crate::sde::{iterated_integrals_product, TrajectoryRecord};
use crate::spatial::{DiscretizedOperators, Grid};
use crate::tt::TtVector;

const NEG_DENSE_CAP: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub max_rank: usize,
    /// `min(u)/max(u)`; NaN when not evaluated.
    pub neg_frac: f64,
    pub step_ms: f64,
    pub log_normalizer: f64,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    /// One per coarse time, starting with the initial density.
    pub estimates: Vec<Estimate>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub final_state: FilterState,
}

impl FilterRun {
    pub fn max_rank(&self) -> usize {
        self.diagnostics.iter().map(|s| s.max_rank).max().unwrap_or(0)
    }

    /// Online wall time in seconds, excluding the initial estimate.
    pub fn online_seconds(&self) -> f64 {
        self.diagnostics.iter().skip(1).map(|s| s.step_ms).sum::<f64>() / 1000.0
    }

    pub fn means(&self) -> Vec<Vec<f64>> {
        self.estimates.iter().map(|e| e.mean.clone()).collect()
    }

    /// Tracking RMSE over `τ_1..τ_{N_T}`.
    pub fn rmse(&self, truth: &TrajectoryRecord) -> Result<f64> {
        let means = self.means();
        rmse(&means[1..], &truth.states[1..])
    }

    /// `t, mean_1..mean_d, mass, max_rank, neg_frac, step_ms`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let d = self.estimates.first().map_or(0, |e| e.mean.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|k| format!("mean_{k}")));
        header.extend(["mass", "max_rank", "neg_frac", "step_ms"].map(String::from));
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for (e, s) in self.estimates.iter().zip(&self.diagnostics) {
            let mut row = vec![format!("{}", s.t)];
            row.extend(e.mean.iter().map(|v| format!("{v}")));
            row.push(format!("{}", e.mass));
            row.push(format!("{}", s.max_rank));
            row.push(format!("{}", s.neg_frac));
            row.push(format!("{:.4}", s.step_ms));
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// `min(u)/max(u)` from the dense density, NaN above the dense cap.
pub fn negativity(u: &TtVector) -> f64 {
    match u.to_dense_capped(NEG_DENSE_CAP) {
        Ok(full) => {
            let (lo, hi) = full
                .data()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            if hi > 0.0 {
                lo / hi
            } else {
                f64::NAN
            }
        }
        Err(_) => f64::NAN,
    }
}

/// Runs the filter over every coarse step of `traj`.
pub fn run_filter(cfg: &FilterConfig, ops: &DiscretizedOperators, traj: &TrajectoryRecord) -> Result<FilterRun> {
    if (traj.delta - cfg.delta).abs() > 1e-12 * cfg.delta {
        return Err(Error::Config(format!(
            "trajectory step {} differs from filter step {}",
            traj.delta, cfg.delta
        )));
    }
    if traj.dim != cfg.grid.d {
        return Err(Error::ShapeMismatch("trajectory and grid dimensions differ".into()));
    }
    if cfg.integral_mode == IntegralMode::Refined && traj.iterated.len() != traj.steps() {
        return Err(Error::Config("refined mode needs iterated integrals in the trajectory".into()));
    }
    let t0 = Instant::now();
    let mut state = init_filter(cfg, ops)?;
    let est0 = extract_estimate(&state.density, &cfg.grid)?;
    let mut estimates = vec![est0];
    let mut diagnostics = vec![StepDiagnostics {
        t: 0.0,
        max_rank: state.density.max_rank(),
        neg_frac: negativity_at(cfg, &state.density, 0),
        step_ms: t0.elapsed().as_secs_f64() * 1e3,
        log_normalizer: state.log_normalizer,
    }];
    for n in 0..traj.steps() {
        let t = Instant::now();
        let dy = &traj.dy[n];
        let iterated = match cfg.integral_mode {
            IntegralMode::Product => iterated_integrals_product(dy, cfg.delta),
            IntegralMode::Refined => traj.iterated[n].clone(),
        };
        state = milstein_step(&state, dy, &iterated, ops, cfg)?;
        let est = extract_estimate(&state.density, &cfg.grid)?;
        let step_ms = t.elapsed().as_secs_f64() * 1e3;
        diagnostics.push(StepDiagnostics {
            t: traj.times[n + 1],
            max_rank: state.density.max_rank(),
            neg_frac: negativity_at(cfg, &state.density, n + 1),
            step_ms,
            log_normalizer: state.log_normalizer,
        });
        estimates.push(est);
    }
    Ok(FilterRun {
        estimates,
        diagnostics,
        final_state: state,
    })
}

fn negativity_at(cfg: &FilterConfig, u: &TtVector, step: usize) -> f64 {
    if cfg.neg_every > 0 && step % cfg.neg_every == 0 {
        negativity(u)
    } else {
        f64::NAN
    }
}

/// Marginal of direction `k` as `x, density` rows (density = mass per cell / Δx).
pub fn write_marginal_csv(path: &Path, est: &Estimate, grid: &Grid, k: usize) -> Result<()> {
    let io = |e| Error::io(path, e);
    let marg = est
        .marginals
        .get(k)
        .ok_or_else(|| Error::InvalidArgument(format!("no marginal for direction {k}")))?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "x,density").map_err(io)?;
    for (x, p) in grid.points().iter().zip(marg) {
        writeln!(w, "{x},{}", p / grid.dx()).map_err(io)?;
    }
    w.flush().map_err(io)
}
