use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Grid;
use crate::tt::TtVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    /// Posterior mean.
    pub mean: Vec<f64>,
    /// Per-direction probability mass per cell, clipped at 0 and summing to 1.
    pub marginals: Vec<Vec<f64>>,
    /// `Σ u (Δx)^d` of the stored (renormalized) density.
    pub mass: f64,
}

/// Mean, marginals and mass of a grid density.
pub fn extract_estimate(density: &TtVector, grid: &Grid) -> Result<Estimate> {
    let d = grid.d;
    if density.dim() != d || density.mode_sizes().iter().any(|&n| n != grid.n) {
        return Err(Error::ShapeMismatch("density does not live on this grid".into()));
    }
    let pts = grid.points();
    let ones = vec![vec![1.0; grid.n]; d];
    let vol = grid.cell_volume();
    let mut mean = Vec::with_capacity(d);
    let mut marginals = Vec::with_capacity(d);
    let mut mass = f64::NAN;
    for k in 0..d {
        let raw = density.partial_contract(k, &ones);
        let total: f64 = raw.iter().sum();
        if k == 0 {
            mass = total * vol;
            if !(mass > 0.0) {
                return Err(Error::NonPositiveMass { mass });
            }
        }
        mean.push(raw.iter().zip(&pts).map(|(u, x)| u * x).sum::<f64>() / total);
        marginals.push(clip_normalize(&raw));
    }
    Ok(Estimate {
        mean,
        marginals,
        mass,
    })
}

fn clip_normalize(raw: &[f64]) -> Vec<f64> {
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    if s > 0.0 {
        clipped.iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

/// `(1/√(d·K)) √(Σ_k |x_k − x̂_k|²)` over `K` paired states.
pub fn rmse(estimates: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimates vs {} truth states",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("rmse of an empty sequence".into()));
    }
    let d = truth[0].len();
    let mut s = 0.0;
    for (e, t) in estimates.iter().zip(truth) {
        if e.len() != d || t.len() != d {
            return Err(Error::ShapeMismatch("state dimension varies".into()));
        }
        s += e.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok((s / (d * estimates.len()) as f64).sqrt())
}

/// L¹ distance between a normalized marginal and its mirror image.
pub fn reflection_asymmetry(marginal: &[f64]) -> f64 {
    marginal
        .iter()
        .zip(marginal.iter().rev())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// Strict interior local maxima holding at least `min_share` of the peak value.
pub fn local_maxima(marginal: &[f64], min_share: f64) -> usize {
    let peak = marginal.iter().cloned().fold(0.0, f64::max);
    if marginal.len() < 3 || peak <= 0.0 {
        return 0;
    }
    marginal
        .windows(3)
        .filter(|w| w[1] > w[0] && w[1] >= w[2] && w[1] >= min_share * peak)
        .count()
}
