//! One-dimensional difference matrices (row-major) and their Kronecker lifts.

use crate::error::{Error, Result};
use crate::spatial::grid::Grid;
use crate::tt::matrix::eye;
use crate::tt::TtMatrix;

/// Dense row-major matrix with explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat1 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat1 {
    pub fn identity(n: usize) -> Self {
        Self { rows: n, cols: n, data: eye(n) }
    }

    pub fn diag(v: &[f64]) -> Self {
        let n = v.len();
        let mut data = vec![0.0; n * n];
        for (i, x) in v.iter().enumerate() {
            data[i * n + i] = *x;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self.get(i, p);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    data[i * other.cols + j] += a * other.get(p, j);
                }
            }
        }
        Self { rows: self.rows, cols: other.cols, data }
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// Forward difference `C̄₁` of size `(N+1) × N`: `(u_r - u_{r-1})/Δx` on mid-edges
/// with zero ghost values.
pub fn forward_diff(grid: &Grid) -> Mat1 {
    let n = grid.n;
    let h = grid.dx();
    let mut data = vec![0.0; (n + 1) * n];
    for r in 0..=n {
        if r < n {
            data[r * n + r] = 1.0 / h;
        }
        if r > 0 {
            data[r * n + r - 1] = -1.0 / h;
        }
    }
    Mat1 { rows: n + 1, cols: n, data }
}

/// Central difference `C₁ = tridiag(-1, 0, 1)/(2Δx)`.
pub fn central_diff(grid: &Grid) -> Mat1 {
    let n = grid.n;
    let h = grid.dx();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        if i + 1 < n {
            data[i * n + i + 1] = 0.5 / h;
        }
        if i > 0 {
            data[i * n + i - 1] = -0.5 / h;
        }
    }
    Mat1 { rows: n, cols: n, data }
}

/// `Id ⊗ … ⊗ op ⊗ … ⊗ Id` with `op` in direction `k` (0-based); the other
/// directions use `N × N` identities.
pub fn lift_1d(op: &Mat1, k: usize, grid: &Grid) -> Result<TtMatrix> {
    if k >= grid.d {
        return Err(Error::InvalidArgument(format!("direction {k} out of range for d = {}", grid.d)));
    }
    let factors: Vec<Mat1> = (0..grid.d)
        .map(|j| if j == k { op.clone() } else { Mat1::identity(grid.n) })
        .collect();
    kron_of(&factors)
}

pub fn kron_of(factors: &[Mat1]) -> Result<TtMatrix> {
    let rows: Vec<usize> = factors.iter().map(|f| f.rows).collect();
    let cols: Vec<usize> = factors.iter().map(|f| f.cols).collect();
    let data: Vec<Vec<f64>> = factors.iter().map(|f| f.data.clone()).collect();
    TtMatrix::kron(&rows, &cols, &data)
}
