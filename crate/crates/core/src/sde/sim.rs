use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::integrals::iterated_integrals_refined;
use crate::spatial::SignalModel;

/// Where the initial state comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    Fixed(Vec<f64>),
    /// Independent normal coordinates.
    Gaussian { mean: Vec<f64>, std: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub t_end: f64,
    pub delta: f64,
    pub substeps: usize,
    pub seed: u64,
    /// Stream index; independent trials share the seed and differ here.
    pub trial: u64,
    pub x0: InitialState,
    /// Half-width of the filter domain; leaving `0.95·L` flags the path.
    pub half_width: Option<f64>,
    /// Keep refined iterated integrals in the record.
    pub refined: bool,
}

impl PathConfig {
    pub fn steps(&self) -> Result<usize> {
        steps_for(self.t_end, self.delta)
    }

    pub fn validate(&self) -> Result<()> {
        self.steps()?;
        if self.substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be >= 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn steps_for(t_end: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("need delta > 0 and T >= 0 (got {delta}, {t_end})")));
    }
    let n = (t_end / delta).round();
    if (n * delta - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::InvalidArgument(format!("T = {t_end} is not a multiple of delta = {delta}")));
    }
    Ok(n as usize)
}

/// A realization on the fine grid: states and the observation path.
#[derive(Debug, Clone)]
pub struct FinePath {
    pub dim: usize,
    pub dt: f64,
    /// `(steps + 1) × d`, row-major.
    pub x: Vec<f64>,
    /// `(steps + 1) × d`, row-major, `y(0) = 0`.
    pub y: Vec<f64>,
}

impl FinePath {
    pub fn steps(&self) -> usize {
        self.x.len() / self.dim - 1
    }

    pub fn state(&self, m: usize) -> &[f64] {
        &self.x[m * self.dim..(m + 1) * self.dim]
    }

    pub fn obs(&self, m: usize) -> &[f64] {
        &self.y[m * self.dim..(m + 1) * self.dim]
    }

    /// Coarse record with step `stride · dt`.
    pub fn coarsen(&self, stride: usize, refined: bool) -> Result<TrajectoryRecord> {
        if stride == 0 || self.steps() % stride != 0 {
            return Err(Error::InvalidArgument(format!(
                "stride {stride} does not divide {} fine steps",
                self.steps()
            )));
        }
        let d = self.dim;
        let n = self.steps() / stride;
        let delta = self.dt * stride as f64;
        let mut rec = TrajectoryRecord {
            dim: d,
            delta,
            times: (0..=n).map(|k| k as f64 * delta).collect(),
            states: (0..=n).map(|k| self.state(k * stride).to_vec()).collect(),
            dy: Vec::with_capacity(n),
            iterated: Vec::new(),
            escaped_at: None,
        };
        for k in 0..n {
            // left-to-right sum of fine increments
            let mut inc = vec![0.0; d];
            for m in k * stride..(k + 1) * stride {
                let (a, b) = (self.obs(m), self.obs(m + 1));
                for i in 0..d {
                    inc[i] += b[i] - a[i];
                }
            }
            rec.dy.push(inc);
            if refined {
                let incs: Vec<Vec<f64>> = (k * stride..(k + 1) * stride)
                    .map(|m| {
                        let (a, b) = (self.obs(m), self.obs(m + 1));
                        (0..d).map(|i| b[i] - a[i]).collect()
                    })
                    .collect();
                rec.iterated.push(iterated_integrals_refined(&incs, d, delta));
            }
        }
        Ok(rec)
    }
}

/// One realization on the coarse grid `τ_n = nδ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub delta: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `Δy_n` over `[τ_n, τ_{n+1}]`.
    pub dy: Vec<Vec<f64>>,
    /// Refined `I_(i,j)` per step, row-major `d × d` (empty unless requested).
    pub iterated: Vec<Vec<f64>>,
    /// First coarse index at which the state left `0.95·L`, if any.
    pub escaped_at: Option<usize>,
}

impl TrajectoryRecord {
    pub fn steps(&self) -> usize {
        self.dy.len()
    }

    /// `t, x_1..x_d, dy_1..dy_d`; row `n` carries the increment over
    /// `[τ_{n-1}, τ_n]` (zeros on the first row).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        let d = self.dim;
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        header.extend((1..=d).map(|i| format!("dy_{i}")));
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for (n, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t}")];
            row.extend(self.states[n].iter().map(|v| format!("{v}")));
            if n == 0 {
                row.extend((0..d).map(|_| "0".to_string()));
            } else {
                row.extend(self.dy[n - 1].iter().map(|v| format!("{v}")));
            }
            writeln!(w, "{}", row.join(",")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn csv_name(seed: u64, trial: u64) -> PathBuf {
        PathBuf::from(format!("traj_seed{seed}_trial{trial}.csv"))
    }
}

/// Independent per-trial generator: seed plus stream index.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn sample_initial(init: &InitialState, d: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let x = match init {
        InitialState::Fixed(x) => x.clone(),
        InitialState::Gaussian { mean, std } => mean
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                m + std * z
            })
            .collect(),
    };
    if x.len() != d {
        return Err(Error::ShapeMismatch(format!("initial state has {} entries, model needs {d}", x.len())));
    }
    Ok(x)
}

/// Euler-Maruyama on the fine grid. The same `dw` drives the state (through
/// `ρ`) and the observation, which is the noise correlation.
pub fn simulate_fine(model: &SignalModel, x0: &[f64], t_end: f64, dt: f64, rng: &mut ChaCha8Rng) -> Result<FinePath> {
    let d = model.dim();
    let steps = steps_for(t_end, dt)?;
    let sq = dt.sqrt();
    let g_const = model.g.is_constant().then(|| model.g.eval(&vec![0.0; d]));
    let r_const = model.rho.is_constant().then(|| model.rho.eval(&vec![0.0; d]));
    let mut x = Vec::with_capacity((steps + 1) * d);
    let mut y = Vec::with_capacity((steps + 1) * d);
    x.extend_from_slice(x0);
    y.extend(std::iter::repeat(0.0).take(d));
    let mut cur = x0.to_vec();
    let mut ycur = vec![0.0; d];
    let (mut f, mut h) = (vec![0.0; d], vec![0.0; d]);
    let (mut dv, mut dw) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..steps {
        for i in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            dv[i] = sq * z;
        }
        for i in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            dw[i] = sq * z;
        }
        model.eval_f(&cur, &mut f);
        model.eval_h(&cur, &mut h);
        let g = g_const.clone().unwrap_or_else(|| model.g.eval(&cur));
        let r = r_const.clone().unwrap_or_else(|| model.rho.eval(&cur));
        let mut next = cur.clone();
        for i in 0..d {
            let mut s = f[i] * dt;
            for j in 0..d {
                s += g[i * d + j] * dv[j] + r[i * d + j] * dw[j];
            }
            next[i] += s;
            ycur[i] += h[i] * dt + dw[i];
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("state became non-finite during simulation".into()));
        }
        cur = next;
        x.extend_from_slice(&cur);
        y.extend_from_slice(&ycur);
    }
    Ok(FinePath { dim: d, dt, x, y })
}

/// Ground truth on the coarse grid of `cfg`.
pub fn simulate_truth(model: &SignalModel, cfg: &PathConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let mut rng = trial_rng(cfg.seed, cfg.trial);
    let x0 = sample_initial(&cfg.x0, model.dim(), &mut rng)?;
    let fine = simulate_fine(model, &x0, cfg.t_end, cfg.delta / cfg.substeps as f64, &mut rng)?;
    let mut rec = fine.coarsen(cfg.substeps, cfg.refined)?;
    if let Some(l) = cfg.half_width {
        let lim = 0.95 * l;
        rec.escaped_at = (0..fine.steps() + 1)
            .find(|&m| fine.state(m).iter().any(|v| v.abs() > lim))
            .map(|m| m / cfg.substeps);
    }
    Ok(rec)
}
