use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::baselines::BaselineRun;
use crate::error::{Error, Result};
use crate::sde::{trial_rng, TrajectoryRecord};
use crate::spatial::SignalModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    /// `M × d`, row-major.
    pub particles: Vec<f64>,
    /// Normalized weights.
    pub weights: Vec<f64>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    /// `1 / Σ w²`
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Weighted histogram of coordinate `k` on bins of width `dx` centred at
    /// `centers`, normalized to sum to one (particles outside are dropped).
    pub fn marginal_histogram(&self, k: usize, centers: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; centers.len()];
        if centers.len() < 2 {
            return out;
        }
        let dx = centers[1] - centers[0];
        let lo = centers[0] - 0.5 * dx;
        for (i, w) in self.weights.iter().enumerate() {
            let b = ((self.particle(i)[k] - lo) / dx).floor();
            if b >= 0.0 && (b as usize) < centers.len() {
                out[b as usize] += w;
            }
        }
        let s: f64 = out.iter().sum();
        if s > 0.0 {
            out.iter_mut().for_each(|v| *v /= s);
        }
        out
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mk, x) in m.iter_mut().zip(self.particle(i)) {
                *mk += w * x;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfConfig {
    pub particles: usize,
    /// Independent Gaussian prior per coordinate.
    pub init_mean: Vec<f64>,
    pub init_std: Vec<f64>,
    pub seed: u64,
    /// Generator stream; keep it distinct from the trajectory streams.
    pub stream: u64,
}

#[derive(Debug, Clone)]
pub struct PfStep {
    pub ensemble: ParticleEnsemble,
    /// Weighted mean before resampling.
    pub mean: Vec<f64>,
    pub resampled: bool,
}

/// Samples `m` equally weighted particles from the Gaussian prior.
pub fn pf_init(m: usize, mean: &[f64], std: &[f64], rng: &mut ChaCha8Rng) -> Result<ParticleEnsemble> {
    if m == 0 {
        return Err(Error::InvalidArgument("particle filter needs at least one particle".into()));
    }
    if mean.len() != std.len() {
        return Err(Error::ShapeMismatch("prior mean and std lengths differ".into()));
    }
    let d = mean.len();
    let mut particles = Vec::with_capacity(m * d);
    for _ in 0..m {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(rng);
            particles.push(mean[k] + std[k] * z);
        }
    }
    Ok(ParticleEnsemble {
        dim: d,
        particles,
        weights: vec![1.0 / m as f64; m],
    })
}

/// Systematic resampling: indices of the surviving particles, in order.
pub fn systematic_resample(weights: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let m = weights.len();
    let u0: f64 = rng.random::<f64>() / m as f64;
    let mut out = Vec::with_capacity(m);
    let mut cum = weights[0];
    let mut j = 0;
    for i in 0..m {
        let u = u0 + i as f64 / m as f64;
        while u > cum && j + 1 < m {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}

/// One step: reweight by `exp(hᵀΔy − ½|h|²δ)`, propagate with the observed
/// increment substituted for the correlated noise,
/// `x' = x + fδ + G√δ ξ + ρ(Δy − hδ)`, then resample if `ess < M/2`.
pub fn pf_step(
    ens: &ParticleEnsemble,
    model: &SignalModel,
    dy: &[f64],
    delta: f64,
    step: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PfStep> {
    let d = ens.dim;
    if model.dim() != d || dy.len() != d {
        return Err(Error::ShapeMismatch("particle step dimensions disagree".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {delta}")));
    }
    let g_const = model.g.is_constant().then(|| model.g.eval(&vec![0.0; d]));
    let r_const = model.rho.is_constant().then(|| model.rho.eval(&vec![0.0; d]));
    let sq = delta.sqrt();
    let m = ens.len();
    let (mut f, mut h, mut xi) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut next = Vec::with_capacity(m * d);
    let mut logw = Vec::with_capacity(m);
    for i in 0..m {
        let x = ens.particle(i);
        model.eval_f(x, &mut f);
        model.eval_h(x, &mut h);
        let g = g_const.clone().unwrap_or_else(|| model.g.eval(x));
        let r = r_const.clone().unwrap_or_else(|| model.rho.eval(x));
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let mut lw = ens.weights[i].ln();
        for k in 0..d {
            lw += h[k] * dy[k] - 0.5 * h[k] * h[k] * delta;
        }
        logw.push(lw);
        for a in 0..d {
            let mut s = x[a] + f[a] * delta;
            for b in 0..d {
                s += g[a * d + b] * sq * xi[b] + r[a * d + b] * (dy[b] - h[b] * delta);
            }
            next.push(s);
        }
    }
    let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::WeightDegeneracy { step });
    }
    let mut weights: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::WeightDegeneracy { step });
    }
    for w in &mut weights {
        *w /= total;
    }
    let mut out = ParticleEnsemble {
        dim: d,
        particles: next,
        weights,
    };
    let mean = out.mean();
    let resampled = out.ess() < 0.5 * m as f64;
    if resampled {
        let idx = systematic_resample(&out.weights, rng);
        let mut p = Vec::with_capacity(m * d);
        for &j in &idx {
            p.extend_from_slice(out.particle(j));
        }
        out.particles = p;
        out.weights = vec![1.0 / m as f64; m];
    }
    Ok(PfStep {
        ensemble: out,
        mean,
        resampled,
    })
}

/// Runs the particle filter over every coarse step of `traj`.
pub fn run_pf(model: &SignalModel, cfg: &PfConfig, traj: &TrajectoryRecord) -> Result<BaselineRun> {
    run_pf_observed(model, cfg, traj, |_, _| {})
}

/// [`run_pf`], calling `observe(n, ensemble)` after every step `n = 1..`.
pub fn run_pf_observed(
    model: &SignalModel,
    cfg: &PfConfig,
    traj: &TrajectoryRecord,
    mut observe: impl FnMut(usize, &ParticleEnsemble),
) -> Result<BaselineRun> {
    if traj.dim != model.dim() || cfg.init_mean.len() != model.dim() {
        return Err(Error::ShapeMismatch("particle filter dimensions disagree".into()));
    }
    let t0 = Instant::now();
    let mut rng = trial_rng(cfg.seed, cfg.stream);
    let mut ens = pf_init(cfg.particles, &cfg.init_mean, &cfg.init_std, &mut rng)?;
    let mut means = vec![ens.mean()];
    let mut resamples = 0;
    for n in 0..traj.steps() {
        let s = pf_step(&ens, model, &traj.dy[n], traj.delta, n + 1, &mut rng)?;
        ens = s.ensemble;
        observe(n + 1, &ens);
        means.push(s.mean);
        resamples += s.resampled as usize;
    }
    Ok(BaselineRun {
        means,
        online_seconds: t0.elapsed().as_secs_f64(),
        resamples,
    })
}
