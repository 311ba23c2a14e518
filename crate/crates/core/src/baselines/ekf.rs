use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineRun;
use crate::error::{Error, Result};
use crate::linalg::{gemm, solve, symmetric_eigen, transpose};
use crate::sde::TrajectoryRecord;
use crate::spatial::{SeparableField, SignalModel};

/// Covariance trace beyond which a run counts as divergent.
pub const EKF_TRACE_LIMIT: f64 = 1e6;
const EIG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: Vec<f64>,
    /// `d × d`, row-major.
    pub cov: Vec<f64>,
}

impl GaussianBelief {
    pub fn diagonal(mean: Vec<f64>, std: &[f64]) -> Self {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for (k, s) in std.iter().enumerate().take(d) {
            cov[k * d + k] = s * s;
        }
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn trace(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|k| self.cov[k * d + k]).sum()
    }
}

/// Symbolic Jacobians, computed once per run.
struct Linearization {
    jf: Vec<SeparableField>,
    jh: Vec<SeparableField>,
}

impl Linearization {
    fn new(model: &SignalModel) -> Self {
        Self {
            jf: model.jacobian_f(),
            jh: model.jacobian_h(),
        }
    }
}

fn diverged(step: usize, reason: impl Into<String>) -> Error {
    Error::EkfDivergence {
        step,
        reason: reason.into(),
    }
}

fn step_with(
    bel: &GaussianBelief,
    model: &SignalModel,
    lin: &Linearization,
    dy: &[f64],
    delta: f64,
    step: usize,
) -> Result<GaussianBelief> {
    let d = bel.dim();
    let m = &bel.mean;
    let mut f = vec![0.0; d];
    model.eval_f(m, &mut f);
    let mut fm: Vec<f64> = lin.jf.iter().map(|e| e.eval(m) * delta).collect();
    for k in 0..d {
        fm[k * d + k] += 1.0;
    }
    let rho = model.rho.eval(m);
    let q: Vec<f64> = model.sigma().eval(m).iter().map(|v| v * delta).collect();

    // predict: F = I + ∂f δ, Q = (GGᵀ + ρρᵀ)δ
    let prior: Vec<f64> = m.iter().zip(&f).map(|(x, v)| x + v * delta).collect();
    let fpft = gemm(&gemm(&fm, &bel.cov, d, d, d), &transpose(&fm, d, d), d, d, d);
    let p: Vec<f64> = fpft.iter().zip(&q).map(|(a, b)| a + b).collect();

    // update against Δy = h δ + Δw, where Δw also drove the state through ρ
    let mut h = vec![0.0; d];
    model.eval_h(&prior, &mut h);
    let hm: Vec<f64> = lin.jh.iter().map(|e| e.eval(&prior)).collect();
    let pht = gemm(&p, &transpose(&hm, d, d), d, d, d);
    let hr = gemm(&hm, &rho, d, d, d);
    let hpht = gemm(&hm, &pht, d, d, d);
    // S = δ²HPHᵀ + δI + δ²(Hρ + ρᵀHᵀ)
    let mut s: Vec<f64> = (0..d * d)
        .map(|i| {
            let (a, b) = (i / d, i % d);
            delta * delta * (hpht[i] + hr[i] + hr[b * d + a])
        })
        .collect();
    for k in 0..d {
        s[k * d + k] += delta;
    }
    // C = δPHᵀ + δρ
    let cross: Vec<f64> = pht.iter().zip(&rho).map(|(a, r)| delta * (a + r)).collect();
    // K = C S⁻¹, solved as S Kᵀ = Cᵀ (S is symmetric)
    let kt = solve(&s, &transpose(&cross, d, d), d, d).map_err(|_| diverged(step, "singular innovation covariance"))?;
    let k = transpose(&kt, d, d);

    let mut mean = prior.clone();
    for a in 0..d {
        for b in 0..d {
            mean[a] += k[a * d + b] * (dy[b] - h[b] * delta);
        }
    }
    let ksk = gemm(&gemm(&k, &s, d, d, d), &kt, d, d, d);
    let mut cov: Vec<f64> = (0..d * d).map(|i| p[i] - ksk[i]).collect();
    for a in 0..d {
        for b in 0..a {
            let v = 0.5 * (cov[a * d + b] + cov[b * d + a]);
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    if mean.iter().chain(&cov).any(|v| !v.is_finite()) {
        return Err(diverged(step, "non-finite mean or covariance"));
    }
    let out = GaussianBelief { mean, cov };
    let tr = out.trace();
    if tr > EKF_TRACE_LIMIT {
        return Err(diverged(step, format!("covariance trace {tr:.3e}")));
    }
    floor_eigenvalues(out, step)
}

fn floor_eigenvalues(mut bel: GaussianBelief, step: usize) -> Result<GaussianBelief> {
    let d = bel.dim();
    let (vals, vecs) = symmetric_eigen(&bel.cov, d).map_err(|_| diverged(step, "covariance eigensolve failed"))?;
    if vals.iter().all(|&v| v >= EIG_FLOOR) {
        return Ok(bel);
    }
    for a in 0..d {
        for b in 0..d {
            bel.cov[a * d + b] = (0..d)
                .map(|r| vecs[a * d + r] * vals[r].max(EIG_FLOOR) * vecs[b * d + r])
                .sum();
        }
    }
    Ok(bel)
}

/// One correlated-noise EKF step: Euler prediction, then a Kalman update on
/// the increment `Δy` with the state/observation cross-covariance `ρδ`.
pub fn ekf_step(bel: &GaussianBelief, model: &SignalModel, dy: &[f64], delta: f64, step: usize) -> Result<GaussianBelief> {
    if bel.dim() != model.dim() || dy.len() != model.dim() || bel.cov.len() != model.dim().pow(2) {
        return Err(Error::ShapeMismatch("EKF step dimensions disagree".into()));
    }
    step_with(bel, model, &Linearization::new(model), dy, delta, step)
}

/// Runs the EKF over every coarse step of `traj`; divergence is an error.
pub fn run_ekf(model: &SignalModel, init: &GaussianBelief, traj: &TrajectoryRecord) -> Result<BaselineRun> {
    if traj.dim != model.dim() || init.dim() != model.dim() {
        return Err(Error::ShapeMismatch("EKF dimensions disagree".into()));
    }
    let t0 = Instant::now();
    let lin = Linearization::new(model);
    let mut bel = init.clone();
    let mut means = vec![bel.mean.clone()];
    for n in 0..traj.steps() {
        bel = step_with(&bel, model, &lin, &traj.dy[n], traj.delta, n + 1)?;
        means.push(bel.mean.clone());
    }
    Ok(BaselineRun {
        means,
        online_seconds: t0.elapsed().as_secs_f64(),
        resamples: 0,
    })
}
