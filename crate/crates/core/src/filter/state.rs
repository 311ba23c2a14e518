use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{DiscretizedOperators, Grid, SeparableField};
use crate::tt::{matvec_round, TtMatrix, TtVector};

/// Floor for the default online rank cap; low-rank operators would otherwise
/// cap the density below the rank a sharp posterior needs.
pub const MIN_RANK_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntegralMode {
    /// `Î_(i,j)` from the coarse increment alone.
    Product,
    /// Iterated integrals accumulated from the fine observation path.
    Refined,
}

/// How the second-order Milstein term is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPath {
    /// `Σ_j L_j (Δy_j u + Σ_i I_(i,j) L_i u)`; with product integrals this
    /// collapses to `B u + ½B(Bu)` with `B = Σ_j Δy_j L_j`.
    Factored,
    /// Stored `L^(i,j)` operators, one matvec each.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitDensity {
    /// Product of 1D Gaussians (diagonal covariance), exact rank 1.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
    Uniform,
    Field(SeparableField),
}

impl InitDensity {
    pub fn isotropic(mean: Vec<f64>, std: f64) -> Self {
        let std = vec![std; mean.len()];
        InitDensity::Gaussian { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub grid: Grid,
    pub eps_tt: f64,
    pub eps_round: f64,
    pub delta: f64,
    pub init: InitDensity,
    pub integral_mode: IntegralMode,
    pub path: StepPath,
    /// Rescale to unit scaled-L² norm after every step.
    pub renormalize: bool,
    /// Cap on any TT-rank produced online; `None` means 6× the operator max
    /// rank, but never below [`MIN_RANK_CAP`].
    pub rank_cap: Option<usize>,
    /// Evaluate the dense negativity diagnostic every this many steps (0 = never).
    pub neg_every: usize,
}

impl FilterConfig {
    pub fn new(grid: Grid, eps_tt: f64, delta: f64, init: InitDensity) -> Self {
        Self {
            grid,
            eps_tt,
            eps_round: eps_tt,
            delta,
            init,
            integral_mode: IntegralMode::Product,
            path: StepPath::Factored,
            renormalize: true,
            rank_cap: None,
            neg_every: 1,
        }
    }

    pub fn validate(&self, ops: &DiscretizedOperators) -> Result<()> {
        if !(self.eps_round > 0.0) {
            return Err(Error::Config("eps_round must be positive".into()));
        }
        if self.grid != ops.grid {
            return Err(Error::Config("filter grid differs from the operator grid".into()));
        }
        if (self.delta - ops.delta).abs() > 1e-12 * ops.delta {
            return Err(Error::Config(format!(
                "filter step {} differs from the operator step {}",
                self.delta, ops.delta
            )));
        }
        if self.path == StepPath::Direct && ops.lij.is_empty() {
            return Err(Error::Config("direct step path needs assembled L^(i,j)".into()));
        }
        if let InitDensity::Gaussian { mean, std } = &self.init {
            if mean.len() != self.grid.d || std.len() != self.grid.d {
                return Err(Error::Config("initial Gaussian has the wrong dimension".into()));
            }
            if std.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Config("initial std must be positive".into()));
            }
        }
        Ok(())
    }

    fn cap(&self, ops: &DiscretizedOperators) -> usize {
        self.rank_cap.unwrap_or((6 * ops.max_rank()).max(MIN_RANK_CAP))
    }
}

#[derive(Debug, Clone)]
pub struct FilterState {
    /// Unnormalized density on the grid.
    pub density: TtVector,
    /// Accumulated log of the scale factors divided out so far.
    pub log_normalizer: f64,
    pub step: usize,
}

/// Scaled discrete L² norm `√((Δx)^d Σ u²)`.
pub fn scaled_norm(u: &TtVector, grid: &Grid) -> f64 {
    u.norm() * grid.cell_volume().sqrt()
}

fn renormalize(u: TtVector, grid: &Grid, step: usize) -> Result<(TtVector, f64)> {
    let n = scaled_norm(&u, grid);
    if !(n >= 1e-300) || !n.is_finite() {
        return Err(Error::FilterCollapse { step, norm: n });
    }
    Ok((u.scale(1.0 / n), n.ln()))
}

pub fn init_filter(cfg: &FilterConfig, ops: &DiscretizedOperators) -> Result<FilterState> {
    cfg.validate(ops)?;
    let grid = &cfg.grid;
    let pts = grid.points();
    let u = match &cfg.init {
        InitDensity::Gaussian { mean, std } => {
            let factors: Vec<Vec<f64>> = (0..grid.d)
                .map(|k| {
                    pts.iter()
                        .map(|x| (-0.5 * ((x - mean[k]) / std[k]).powi(2)).exp())
                        .collect()
                })
                .collect();
            TtVector::rank_one(&factors)?
        }
        InitDensity::Uniform => TtVector::ones(&grid.modes()),
        InitDensity::Field(f) => f.sample_tt(&grid.point_sets(None))?,
    };
    let n = scaled_norm(&u, grid);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::InvalidArgument("initial density vanishes on the grid".into()));
    }
    Ok(FilterState {
        density: u.scale(1.0 / n),
        log_normalizer: n.ln(),
        step: 0,
    })
}

/// `B = Σ_j Δy_j L_j`.
fn noise_operator(ops: &DiscretizedOperators, dy: &[f64], eps: f64) -> Result<TtMatrix> {
    let terms: Vec<(f64, &TtMatrix)> = dy.iter().copied().zip(ops.lk.iter()).collect();
    TtMatrix::lin_comb(&terms, eps)
}

/// Pre-implicit right-hand side `y`, before applying `M_L`.
pub fn explicit_part(
    state: &FilterState,
    dy: &[f64],
    iterated: &[f64],
    ops: &DiscretizedOperators,
    cfg: &FilterConfig,
) -> Result<TtVector> {
    let d = ops.dim();
    if dy.len() != d || iterated.len() != d * d {
        return Err(Error::ShapeMismatch(format!(
            "step inputs have {} increments and {} integrals for d = {d}",
            dy.len(),
            iterated.len()
        )));
    }
    let eps = cfg.eps_round;
    let cap = Some(cfg.cap(ops));
    let u = &state.density;
    let mv = |m: &TtMatrix, v: &TtVector| matvec_round(m, v, eps, cap);
    match cfg.path {
        StepPath::Direct => {
            let mut parts = vec![mv(&ops.m_r, u)?];
            for (j, l) in ops.lk.iter().enumerate() {
                parts.push(mv(l, u)?.scale(dy[j]));
            }
            for i in 0..d {
                for j in 0..d {
                    let c = iterated[i * d + j];
                    if c != 0.0 {
                        let lij = ops.lij(i, j).expect("validated");
                        parts.push(mv(lij, u)?.scale(c));
                    }
                }
            }
            let terms: Vec<(f64, &TtVector)> = parts.iter().map(|p| (1.0, p)).collect();
            TtVector::lin_comb(&terms, eps)
        }
        StepPath::Factored if cfg.integral_mode == IntegralMode::Product => {
            let b = noise_operator(ops, dy, eps * 0.1)?;
            let base = mv(&ops.m_r_product, u)?;
            let bu = mv(&b, u)?;
            let bbu = mv(&b, &bu)?;
            TtVector::lin_comb(&[(1.0, &base), (1.0, &bu), (0.5, &bbu)], eps)
        }
        StepPath::Factored => {
            let lu: Vec<TtVector> = ops.lk.iter().map(|l| mv(l, u)).collect::<Result<_>>()?;
            let mut parts = vec![mv(&ops.m_r, u)?];
            for j in 0..d {
                let mut terms: Vec<(f64, &TtVector)> = vec![(dy[j], u)];
                for (i, li) in lu.iter().enumerate() {
                    terms.push((iterated[i * d + j], li));
                }
                let z = TtVector::lin_comb(&terms, eps)?;
                parts.push(mv(&ops.lk[j], &z)?);
            }
            let terms: Vec<(f64, &TtVector)> = parts.iter().map(|p| (1.0, p)).collect();
            TtVector::lin_comb(&terms, eps)
        }
    }
}

/// One semi-implicit Milstein step `u' = M_L (M_R u + Σ_j L_j u Δy_j + Σ L^(i,j) u I_(i,j))`.
pub fn milstein_step(
    state: &FilterState,
    dy: &[f64],
    iterated: &[f64],
    ops: &DiscretizedOperators,
    cfg: &FilterConfig,
) -> Result<FilterState> {
    let y = explicit_part(state, dy, iterated, ops, cfg)?;
    let u = matvec_round(&ops.m_l, &y, cfg.eps_round, Some(cfg.cap(ops)))?;
    let step = state.step + 1;
    if cfg.renormalize {
        let (u, log_n) = renormalize(u, &cfg.grid, step)?;
        Ok(FilterState {
            density: u,
            log_normalizer: state.log_normalizer + log_n,
            step,
        })
    } else {
        let n = scaled_norm(&u, &cfg.grid);
        if !(n >= 1e-300) || !n.is_finite() {
            return Err(Error::FilterCollapse { step, norm: n });
        }
        Ok(FilterState {
            density: u,
            log_normalizer: state.log_normalizer,
            step,
        })
    }
}
