use crate::error::{Error, Result};
use crate::tt::matrix::TtMatrix;
use crate::tt::ops::matmat_round;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSchulzConfig {
    /// Stop once `‖XA − I‖_F / ‖I‖_F < tol`.
    pub tol: f64,
    /// Relative rounding tolerance after every multiply.
    pub eps_round: f64,
    pub max_iter: usize,
    /// Hard cap on any intermediate TT-rank.
    pub rank_cap: usize,
    /// While far from convergence, round with `max(eps_round, adaptive · residual)`.
    /// The iteration is self-correcting, so perturbations well below the current
    /// residual cost nothing, and the looser tolerance keeps early ranks small.
    /// Zero disables it. A converged iterate that was last rounded looser than
    /// `eps_round` gets one more step at `eps_round`, so the returned ranks
    /// reflect `eps_round` alone.
    pub adaptive: f64,
}

impl Default for NewtonSchulzConfig {
    fn default() -> Self {
        Self {
            tol: 5e-5,
            eps_round: 1e-8,
            max_iter: 100,
            rank_cap: 256,
            adaptive: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSchulzReport {
    pub inverse: TtMatrix,
    /// Residual `‖XA − I‖_F / ‖I‖_F` of every iterate checked, starting with `X_0`.
    pub residuals: Vec<f64>,
    /// Largest rank seen in any iterate.
    pub max_rank_seen: usize,
}

impl NewtonSchulzReport {
    pub fn iterations(&self) -> usize {
        self.residuals.len()
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }
}

const POLISH_STEPS: usize = 1;

/// No progress over the last three iterations once in the contraction regime.
fn stalled(res: &[f64]) -> bool {
    let n = res.len();
    n >= 4 && res[n - 1] < 1.0 && res[n - 1] >= 0.99 * res[n - 4]
}

/// Relative residual `‖XA − I‖_F / ‖I‖_F`.
pub fn inverse_residual(x: &TtMatrix, a: &TtMatrix) -> Result<f64> {
    let id = TtMatrix::identity(a.col_sizes());
    let e = x.matmat(a)?.sub(&id)?;
    let n_i = (a.col_sizes().iter().map(|&n| n as f64).product::<f64>()).sqrt();
    Ok(e.norm() / n_i)
}

/// Newton-Schulz iteration `X ← X(2I − AX)` with TT rounding after each multiply.
///
/// Starts from `X_0 = Aᵀ/(‖A‖₁‖A‖_∞)`, where both norms are replaced by
/// TT-computable upper bounds (a larger scale only delays convergence).
pub fn newton_schulz_inverse(a: &TtMatrix, cfg: &NewtonSchulzConfig) -> Result<NewtonSchulzReport> {
    if a.row_sizes() != a.col_sizes() {
        return Err(Error::ShapeMismatch("Newton-Schulz needs a square operator".into()));
    }
    if !(cfg.tol > 0.0) || !(cfg.eps_round >= 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    let scale = a.norm_one_bound() * a.norm_inf_bound();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::ZeroTensor);
    }
    let id = TtMatrix::identity(a.row_sizes());
    let step = |x: &TtMatrix, eps: f64| -> Result<TtMatrix> {
        let y = id.scale(2.0).sub(&a.matmat(x)?)?.round(eps);
        if y.max_rank() > cfg.rank_cap {
            return Err(Error::RankCapExceeded {
                rank: y.max_rank(),
                cap: cfg.rank_cap,
                context: "Newton-Schulz correction",
            });
        }
        matmat_round(x, &y, eps, Some(cfg.rank_cap))
    };
    let mut x = a.transpose().scale(1.0 / scale);
    let mut residuals = Vec::new();
    let mut max_rank_seen = x.max_rank();
    let mut last_eps = 0.0;
    for it in 0..=cfg.max_iter {
        let res = inverse_residual(&x, a)?;
        residuals.push(res);
        log::debug!("newton-schulz iter {it}: residual {res:.3e}, rank {}", x.max_rank());
        if !res.is_finite() {
            break;
        }
        if res < cfg.tol {
            if last_eps > cfg.eps_round {
                // tighter internal rounding keeps truncation noise out of the final round
                for _ in 0..POLISH_STEPS {
                    let polished = step(&x, 0.01 * cfg.eps_round)?.round(cfg.eps_round);
                    let r = inverse_residual(&polished, a)?;
                    log::debug!("newton-schulz polish: residual {r:.3e}, rank {}", polished.max_rank());
                    if !(r < cfg.tol) {
                        break;
                    }
                    residuals.push(r);
                    max_rank_seen = max_rank_seen.max(polished.max_rank());
                    x = polished;
                }
            }
            return Ok(NewtonSchulzReport {
                inverse: x,
                residuals,
                max_rank_seen,
            });
        }
        if it == cfg.max_iter || stalled(&residuals) {
            break;
        }
        last_eps = cfg.eps_round.max(cfg.adaptive * res.min(1.0));
        x = step(&x, last_eps)?;
        max_rank_seen = max_rank_seen.max(x.max_rank());
    }
    Err(Error::NotConverged {
        iterations: residuals.len(),
        residual: *residuals.last().unwrap_or(&f64::NAN),
    })
}
