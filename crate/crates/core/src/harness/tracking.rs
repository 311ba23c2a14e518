//! Cubic-sensor and multi-mode tracking: every method runs on the same
//! simulated trajectories.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{run_ekf, run_pf_observed, GaussianBelief, PfConfig};
use crate::error::{Error, Result};
use crate::filter::{local_maxima, reflection_asymmetry, run_filter, FilterConfig, InitDensity};
use crate::harness::record::{ResultRecord, ResultRow, RowStatus};
use crate::harness::spec::{ExperimentKind, ExperimentSpec, TrackingConfig};
use crate::sde::{simulate_truth, InitialState, PathConfig, TrajectoryRecord};
use crate::spatial::cache::assemble_cached;
use crate::spatial::{assemble_operators, AssemblyConfig, DiscretizedOperators, Grid, SignalModel};

/// Offset separating particle-filter generator streams from trajectory streams.
pub const PF_STREAM_BASE: u64 = 1 << 32;
pub const RAW_DIR: &str = "raw";

/// Marginals (probability per cell, one vector per direction) at a time.
pub type Snapshot = (f64, Vec<Vec<f64>>);

pub fn tracking_model(kind: ExperimentKind, dim: usize) -> Result<SignalModel> {
    match kind {
        ExperimentKind::Cubic => Ok(SignalModel::cubic_sensor(dim)),
        ExperimentKind::Multimode => Ok(SignalModel::multimode()),
        k => Err(Error::Config(format!("{} is not a tracking experiment", k.name()))),
    }
}

pub fn pf_method(particles: usize) -> String {
    format!("pf{particles}")
}

pub fn raw_path(dir: &Path, trial: u64, what: &str) -> PathBuf {
    dir.join(RAW_DIR).join(format!("trial{trial}_{what}.csv"))
}

/// Worst reflection asymmetry over snapshots and directions, and the smallest
/// per-direction share of snapshots after `after` with two or more modes.
pub fn symmetry_scores(snaps: &[Snapshot], after: f64, share: f64) -> (f64, f64) {
    let asym = snaps
        .iter()
        .flat_map(|(_, m)| m.iter().map(|v| reflection_asymmetry(v)))
        .fold(0.0, f64::max);
    let late: Vec<&Snapshot> = snaps.iter().filter(|(t, _)| *t > after).collect();
    let dims = snaps.first().map_or(0, |s| s.1.len());
    let bimodal = (0..dims)
        .map(|k| {
            let hits = late.iter().filter(|(_, m)| local_maxima(&m[k], share) >= 2).count();
            if late.is_empty() {
                0.0
            } else {
                hits as f64 / late.len() as f64
            }
        })
        .fold(1.0, f64::min);
    (asym, bimodal)
}

fn write_means(path: &Path, times: &[f64], means: &[Vec<f64>]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let d = means.first().map_or(0, |m| m.len());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=d).map(|k| format!("mean_{k}")))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    for (t, m) in times.iter().zip(means) {
        let row: Vec<String> = std::iter::once(format!("{t}")).chain(m.iter().map(|v| format!("{v}"))).collect();
        writeln!(w, "{}", row.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `t, dim, x, density` with density = probability per cell / Δx.
pub fn write_marginals(path: &Path, snaps: &[Snapshot], grid: &Grid) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "t,dim,x,density").map_err(io)?;
    let pts = grid.points();
    for (t, m) in snaps {
        for (k, marg) in m.iter().enumerate() {
            for (x, p) in pts.iter().zip(marg) {
                writeln!(w, "{t},{},{x},{}", k + 1, p / grid.dx()).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

struct Context<'a> {
    spec: &'a ExperimentSpec,
    cfg: &'a TrackingConfig,
    model: SignalModel,
    grid: Grid,
    ops: Option<DiscretizedOperators>,
}

fn numerical_or(e: Error, row: ResultRow, status: RowStatus) -> Result<ResultRow> {
    if e.is_numerical() {
        Ok(row.failed(status, e.to_string()))
    } else {
        Err(e)
    }
}

impl Context<'_> {
    fn path_config(&self, trial: u64) -> PathConfig {
        let d = self.cfg.dim;
        PathConfig {
            t_end: self.cfg.t_end,
            delta: self.cfg.delta,
            substeps: self.cfg.substeps,
            seed: self.spec.seed,
            trial,
            x0: InitialState::Gaussian {
                mean: vec![self.cfg.init_mean; d],
                std: self.cfg.init_std,
            },
            half_width: Some(self.cfg.half_width),
            refined: false,
        }
    }

    fn row(&self, method: &str, trial: u64) -> ResultRow {
        ResultRow::new(method, trial, self.spec.seed, self.cfg.dim, self.cfg.n, self.cfg.delta)
    }

    fn snapshot_due(&self, n: usize) -> bool {
        self.cfg.snapshot_every > 0 && n > 0 && n % self.cfg.snapshot_every == 0
    }

    fn run_trial(&self, trial: u64) -> Result<Vec<ResultRow>> {
        let traj = simulate_truth(&self.model, &self.path_config(trial))?;
        let keep = self.cfg.plot_trials.contains(&trial);
        let out = &self.spec.output_dir;
        if keep {
            traj.write_csv(&raw_path(out, trial, "truth"))?;
        }
        let mut rows = Vec::new();
        if let Some(ops) = &self.ops {
            rows.push(self.run_tt(ops, &traj, trial, keep)?);
        }
        for (idx, &m) in self.cfg.pf_particles.iter().enumerate() {
            rows.push(self.run_pf(m, idx as u64, &traj, trial, keep)?);
        }
        if self.cfg.ekf {
            rows.push(self.run_ekf(&traj, trial, keep)?);
        }
        Ok(rows)
    }

    fn run_tt(&self, ops: &DiscretizedOperators, traj: &TrajectoryRecord, trial: u64, keep: bool) -> Result<ResultRow> {
        let c = self.cfg;
        let mut fc = FilterConfig::new(
            self.grid,
            c.eps_tt,
            c.delta,
            InitDensity::isotropic(vec![c.init_mean; c.dim], c.init_std),
        );
        fc.eps_round = c.eps_round();
        fc.neg_every = c.snapshot_every;
        let mut row = self.row("tt", trial);
        let run = match run_filter(&fc, ops, traj) {
            Ok(r) => r,
            Err(e) => return numerical_or(e, row, RowStatus::Failed),
        };
        row.rmse = Some(run.rmse(traj)?);
        row.rank = Some(run.max_rank());
        row.wall_s = run.online_seconds();
        let snaps: Vec<Snapshot> = run
            .estimates
            .iter()
            .enumerate()
            .filter(|(n, _)| self.snapshot_due(*n))
            .map(|(n, e)| (traj.times[n], e.marginals.clone()))
            .collect();
        if !snaps.is_empty() {
            let (a, b) = symmetry_scores(&snaps, c.bimodal_after, c.peak_share);
            row.asymmetry = Some(a);
            row.bimodal_fraction = Some(b);
        }
        if keep {
            run.write_csv(&raw_path(&self.spec.output_dir, trial, "tt"))?;
            if !snaps.is_empty() {
                write_marginals(&raw_path(&self.spec.output_dir, trial, "tt_marginals"), &snaps, &self.grid)?;
            }
        }
        Ok(row)
    }

    fn run_pf(&self, particles: usize, idx: u64, traj: &TrajectoryRecord, trial: u64, keep: bool) -> Result<ResultRow> {
        let c = self.cfg;
        let method = pf_method(particles);
        let cfg = PfConfig {
            particles,
            init_mean: vec![c.init_mean; c.dim],
            init_std: vec![c.init_std; c.dim],
            seed: self.spec.seed,
            stream: PF_STREAM_BASE + trial * 64 + idx,
        };
        let centers = self.grid.points();
        let mut snaps: Vec<Snapshot> = Vec::new();
        let mut row = self.row(&method, trial);
        let res = run_pf_observed(&self.model, &cfg, traj, |n, ens| {
            if self.snapshot_due(n) {
                let m = (0..c.dim).map(|k| ens.marginal_histogram(k, &centers)).collect();
                snaps.push((traj.times[n], m));
            }
        });
        let run = match res {
            Ok(r) => r,
            Err(e) => return numerical_or(e, row, RowStatus::Failed),
        };
        row.rmse = Some(run.rmse(traj)?);
        row.wall_s = run.online_seconds;
        if !snaps.is_empty() {
            let (a, b) = symmetry_scores(&snaps, c.bimodal_after, c.peak_share);
            row.asymmetry = Some(a);
            row.bimodal_fraction = Some(b);
        }
        if keep {
            write_means(&raw_path(&self.spec.output_dir, trial, &method), &traj.times, &run.means)?;
            if !snaps.is_empty() {
                let p = raw_path(&self.spec.output_dir, trial, &format!("{method}_marginals"));
                write_marginals(&p, &snaps, &self.grid)?;
            }
        }
        Ok(row)
    }

    fn run_ekf(&self, traj: &TrajectoryRecord, trial: u64, keep: bool) -> Result<ResultRow> {
        let c = self.cfg;
        let init = GaussianBelief::diagonal(vec![c.init_mean; c.dim], &vec![c.init_std; c.dim]);
        let t = Instant::now();
        let mut row = self.row("ekf", trial);
        let run = match run_ekf(&self.model, &init, traj) {
            Ok(r) => r,
            Err(e @ Error::EkfDivergence { .. }) => return Ok(row.failed(RowStatus::Diverged, e.to_string())),
            Err(e) => return numerical_or(e, row, RowStatus::Failed),
        };
        row.rmse = Some(run.rmse(traj)?);
        row.wall_s = t.elapsed().as_secs_f64();
        if keep {
            write_means(&raw_path(&self.spec.output_dir, trial, "ekf"), &traj.times, &run.means)?;
        }
        Ok(row)
    }
}

fn operators(cfg: &TrackingConfig, model: &SignalModel, grid: &Grid) -> Result<DiscretizedOperators> {
    let mut ac = AssemblyConfig::new(cfg.eps_tt, cfg.delta);
    ac.skip_lij = true;
    ac.advection = cfg.advection;
    match &cfg.cache_dir {
        Some(dir) => assemble_cached(dir, model, grid, &ac),
        None => assemble_operators(model, grid, &ac),
    }
}

/// Runs TT, particle filters and the EKF on shared trajectories.
pub fn run_tracking(spec: &ExperimentSpec) -> Result<ResultRecord> {
    spec.validate()?;
    let cfg = spec.tracking.as_ref().expect("validated");
    let model = tracking_model(spec.kind, cfg.dim)?;
    let grid = Grid::new(cfg.half_width, cfg.n, cfg.dim)?;
    if spec.trials == 0 {
        return Ok(ResultRecord::new(spec.kind, spec.seed, Vec::new()));
    }
    let ops = if cfg.tt {
        let t = Instant::now();
        let ops = operators(cfg, &model, &grid)?;
        log::info!("offline stage {:.2}s, max operator rank {}", t.elapsed().as_secs_f64(), ops.max_rank());
        Some(ops)
    } else {
        None
    };
    if !cfg.plot_trials.is_empty() {
        let raw = spec.output_dir.join(RAW_DIR);
        fs::create_dir_all(&raw).map_err(|e| Error::io(&raw, e))?;
    }
    let ctx = Context {
        spec,
        cfg,
        model,
        grid,
        ops,
    };
    let per_trial: Vec<Vec<ResultRow>> = super::worker_pool(spec.workers)?.install(|| {
        (0..spec.trials as u64)
            .into_par_iter()
            .map(|t| {
                let rows = ctx.run_trial(t);
                if let Ok(r) = &rows {
                    for row in r {
                        log::info!("trial {t} {}: {:?} rmse {:?}", row.method, row.status, row.rmse);
                    }
                }
                rows
            })
            .collect::<Result<_>>()
    })?;
    Ok(ResultRecord::new(spec.kind, spec.seed, per_trial.concat()))
}
