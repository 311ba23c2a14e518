//! Convergence sweeps against a fine reference on shared observation paths:
//! grid spacing, step size, and TT truncation tolerance.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterConfig, InitDensity, IntegralMode};
use crate::harness::record::{ResultRecord, ResultRow};
use crate::harness::spec::{dyadic_ratio, ConvergenceConfig, ExperimentKind, ExperimentSpec};
use crate::sde::{sample_initial, simulate_fine, trial_rng, FinePath, InitialState, TrajectoryRecord};
use crate::spatial::{assemble_operators, AssemblyConfig, DiscretizedOperators, Grid, SignalModel};
use crate::tt::{TtMatrix, TtVector};

/// Row-major `m × n` cubic Lagrange interpolation from uniform nodes `xs` to `targets`.
pub fn cubic_interpolation_matrix(xs: &[f64], targets: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    if n < 4 {
        return Err(Error::InvalidArgument("cubic interpolation needs 4 nodes".into()));
    }
    let h = xs[1] - xs[0];
    let mut p = vec![0.0; targets.len() * n];
    for (row, &x) in targets.iter().enumerate() {
        let r = ((x - xs[0]) / h).floor() as isize;
        let i0 = (r - 1).clamp(0, n as isize - 4) as usize;
        for a in i0..i0 + 4 {
            let mut l = 1.0;
            for b in i0..i0 + 4 {
                if a != b {
                    l *= (x - xs[b]) / (xs[a] - xs[b]);
                }
            }
            p[row * n + a] = l;
        }
    }
    Ok(p)
}

fn relative_distance(u: &TtVector, reference: &TtVector) -> Result<f64> {
    Ok(u.sub(reference)?.norm() / reference.norm())
}

/// Probability density: `u / (Σu (Δx)^d)`.
fn normalized(u: &TtVector, grid: &Grid) -> Result<TtVector> {
    let mass = u.contract_all(&vec![vec![1.0; grid.n]; grid.d]) * grid.cell_volume();
    if !(mass > 0.0) {
        return Err(Error::NonPositiveMass { mass });
    }
    Ok(u.scale(1.0 / mass))
}

struct Sweep<'a> {
    spec: &'a ExperimentSpec,
    cfg: &'a ConvergenceConfig,
    model: SignalModel,
}

impl Sweep<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn init(&self) -> InitDensity {
        InitDensity::isotropic(vec![self.cfg.init_mean; self.dim()], self.cfg.init_std)
    }

    fn path(&self, trial: u64, dt: f64) -> Result<FinePath> {
        let mut rng = trial_rng(self.spec.seed, trial);
        let x0 = InitialState::Gaussian {
            mean: vec![self.cfg.init_mean; self.dim()],
            std: self.cfg.init_std,
        };
        let x0 = sample_initial(&x0, self.dim(), &mut rng)?;
        simulate_fine(&self.model, &x0, self.cfg.t_end, dt, &mut rng)
    }

    fn operators(&self, grid: &Grid, eps: f64, delta: f64) -> Result<DiscretizedOperators> {
        let mut ac = AssemblyConfig::new(eps, delta);
        ac.skip_lij = true;
        assemble_operators(&self.model, grid, &ac)
    }

    fn final_density(
        &self,
        ops: &DiscretizedOperators,
        eps: f64,
        traj: &TrajectoryRecord,
        adjust: impl FnOnce(&mut FilterConfig),
    ) -> Result<TtVector> {
        let mut fc = FilterConfig::new(ops.grid, eps, traj.delta, self.init());
        fc.neg_every = 0;
        adjust(&mut fc);
        Ok(run_filter(&fc, ops, traj)?.final_state.density)
    }

    fn row(&self, method: &str, trial: u64, n: usize, param: f64) -> ResultRow {
        ResultRow::new(method, trial, self.spec.seed, self.dim(), n, param)
    }

    fn pool_map<T: Send>(&self, f: impl Fn(u64) -> Result<Vec<T>> + Sync) -> Result<Vec<T>> {
        let per: Vec<Vec<T>> = super::worker_pool(self.spec.workers)?
            .install(|| (0..self.spec.trials as u64).into_par_iter().map(&f).collect::<Result<_>>())?;
        Ok(per.into_iter().flatten().collect())
    }

    /// Normalized final densities on each grid against cubic interpolation of
    /// the reference grid; error is the discrete L² distance.
    fn spatial(&self) -> Result<Vec<ResultRow>> {
        let c = self.cfg;
        let d = self.dim();
        let sizes = c.grid_levels();
        let nref = c.reference as usize;
        let eps = c.eps_tt;
        let ref_grid = Grid::new(c.half_width, nref, d)?;
        let ref_ops = self.operators(&ref_grid, eps, c.delta)?;
        let levels: Vec<(Grid, DiscretizedOperators, TtMatrix)> = sizes
            .iter()
            .map(|&n| {
                let g = Grid::new(c.half_width, n, d)?;
                let ops = self.operators(&g, eps, c.delta)?;
                let p = cubic_interpolation_matrix(&ref_grid.points(), &g.points())?;
                let interp = TtMatrix::kron(&vec![n; d], &vec![nref; d], &vec![p; d])?;
                Ok((g, ops, interp))
            })
            .collect::<Result<_>>()?;
        let dt = c.delta / c.substeps as f64;
        self.pool_map(|trial| {
            let traj = self.path(trial, dt)?.coarsen(c.substeps, false)?;
            let reference = normalized(&self.final_density(&ref_ops, eps, &traj, |_| {})?, &ref_grid)?;
            levels
                .iter()
                .map(|(g, ops, interp)| {
                    let u = normalized(&self.final_density(ops, eps, &traj, |_| {})?, g)?;
                    let diff = u.sub(&interp.matvec(&reference)?)?;
                    let mut row = self.row("spatial", trial, g.n, g.dx());
                    row.error = Some(diff.norm() * g.cell_volume().sqrt());
                    Ok(row)
                })
                .collect()
        })
    }

    /// Unnormalized final densities at each step size against the reference
    /// step on one fine path per trial, once per iterated-integral mode.
    fn temporal(&self) -> Result<Vec<ResultRow>> {
        let c = self.cfg;
        let grid = Grid::new(c.half_width, c.n, self.dim())?;
        let ref_ops = self.operators(&grid, c.eps_tt, c.reference)?;
        let levels: Vec<(f64, usize, DiscretizedOperators)> = c
            .levels
            .iter()
            .map(|&delta| {
                let ratio = dyadic_ratio(delta, c.reference).ok_or_else(|| Error::Config("levels must be dyadic".into()))?;
                Ok((delta, ratio * c.substeps, self.operators(&grid, c.eps_tt, delta)?))
            })
            .collect::<Result<_>>()?;
        self.pool_map(|trial| {
            let fine = self.path(trial, c.reference / c.substeps as f64)?;
            // the reference always uses refined integrals
            let reference = self.final_density(&ref_ops, c.eps_tt, &fine.coarsen(c.substeps, true)?, |fc| {
                fc.renormalize = false;
                fc.integral_mode = IntegralMode::Refined;
            })?;
            let mut rows = Vec::new();
            for &mode in &c.integral_modes {
                let refined = mode == IntegralMode::Refined;
                let adjust = |fc: &mut FilterConfig| {
                    fc.renormalize = false;
                    fc.integral_mode = mode;
                };
                let method = if refined { "refined" } else { "product" };
                for (delta, stride, ops) in &levels {
                    let u = self.final_density(ops, c.eps_tt, &fine.coarsen(*stride, refined)?, adjust)?;
                    let mut row = self.row(method, trial, c.n, *delta);
                    row.error = Some(relative_distance(&u, &reference)?);
                    rows.push(row);
                }
            }
            Ok(rows)
        })
    }

    /// Final densities at each TT tolerance against a near-exact tolerance.
    fn tt_accuracy(&self) -> Result<Vec<ResultRow>> {
        let c = self.cfg;
        let grid = Grid::new(c.half_width, c.n, self.dim())?;
        let ref_ops = self.operators(&grid, c.reference, c.delta)?;
        let levels: Vec<(f64, DiscretizedOperators)> = c
            .levels
            .iter()
            .map(|&eps| Ok((eps, self.operators(&grid, eps, c.delta)?)))
            .collect::<Result<_>>()?;
        self.pool_map(|trial| {
            let traj = self.path(trial, c.delta / c.substeps as f64)?.coarsen(c.substeps, false)?;
            let reference = self.final_density(&ref_ops, c.reference, &traj, |_| {})?;
            levels
                .iter()
                .map(|(eps, ops)| {
                    let run = {
                        let mut fc = FilterConfig::new(grid, *eps, c.delta, self.init());
                        fc.neg_every = 0;
                        run_filter(&fc, ops, &traj)?
                    };
                    let mut row = self.row("tt", trial, c.n, *eps);
                    row.error = Some(relative_distance(&run.final_state.density, &reference)?);
                    row.rank = Some(run.max_rank());
                    row.wall_s = run.online_seconds();
                    Ok(row)
                })
                .collect()
        })
    }
}

pub fn run_convergence(spec: &ExperimentSpec) -> Result<ResultRecord> {
    spec.validate()?;
    let cfg = spec.convergence.as_ref().expect("validated");
    let sweep = Sweep {
        spec,
        cfg,
        model: cfg.model.model(),
    };
    let rows = match spec.kind {
        ExperimentKind::SpatialOrder => sweep.spatial()?,
        ExperimentKind::TemporalOrder => sweep.temporal()?,
        ExperimentKind::TtAccuracy => sweep.tt_accuracy()?,
        k => return Err(Error::Config(format!("{} is not a convergence study", k.name()))),
    };
    Ok(ResultRecord::new(spec.kind, spec.seed, rows))
}
