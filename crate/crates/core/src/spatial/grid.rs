use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform tensor grid on `[-L, L]^d` with `N` interior points per direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_width: f64,
    pub n: usize,
    pub d: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize, d: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidArgument(format!("half-width must be positive, got {half_width}")));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need N >= 2 points per direction, got {n}")));
        }
        if d < 1 {
            return Err(Error::InvalidArgument("need d >= 1".into()));
        }
        Ok(Self { half_width, n, d })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.n as f64 + 1.0)
    }

    /// `x_r = -L + r Δx` for `r = 1..=N`.
    pub fn points(&self) -> Vec<f64> {
        (1..=self.n).map(|r| self.coord(r as f64)).collect()
    }

    /// Mid-edge points `r = 1/2, 3/2, …, N + 1/2`.
    pub fn midpoints(&self) -> Vec<f64> {
        (0..=self.n).map(|r| self.coord(r as f64 + 0.5)).collect()
    }

    #[inline]
    pub fn coord(&self, r: f64) -> f64 {
        -self.half_width + r * self.dx()
    }

    pub fn modes(&self) -> Vec<usize> {
        vec![self.n; self.d]
    }

    /// `(Δx)^d`
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Grid points in each direction, optionally switching direction `mid` to mid-edge points.
    pub fn point_sets(&self, mid: Option<usize>) -> Vec<Vec<f64>> {
        (0..self.d)
            .map(|k| if Some(k) == mid { self.midpoints() } else { self.points() })
            .collect()
    }

    pub fn contains(&self, x: &[f64], fraction: f64) -> bool {
        x.iter().all(|v| v.abs() <= fraction * self.half_width)
    }
}
