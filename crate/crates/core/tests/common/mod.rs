//! Shared oracles: a dense finite-difference implementation of the filter
//! step written from the scheme directly (no TT code), random model cases,
//! and the scalar Kalman-Bucy filter with correlated noise.
#![allow(dead_code)]

use dmz_tt::spatial::{FieldMatrix, Grid, SeparableField, SignalModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Coefficients of the random model family, per direction `k`:
/// `f_k = a x_k + b sin x_k + c sin x_{k+1}`, `h_k = p x_k + q sin x_k`,
/// `G = diag(g)`, `ρ = diag(r + s cos x_k)`.
#[derive(Debug, Clone)]
pub struct Coeffs {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub g: Vec<f64>,
    pub r: Vec<f64>,
    pub s: Vec<f64>,
}

impl Coeffs {
    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn random(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut v = |lo: f64, hi: f64| (0..d).map(|_| rng.random_range(lo..hi)).collect::<Vec<f64>>();
        let a = v(-0.8, 0.2);
        let b = v(-0.5, 0.5);
        let c = if d > 1 { v(-0.3, 0.3) } else { vec![0.0; d] };
        let p = v(-1.0, 1.0);
        let q = v(-0.5, 0.5);
        let g = v(0.3, 0.8);
        let r = v(0.2, 0.5);
        let s = v(-0.15, 0.15);
        Self { a, b, c, p, q, g, r, s }
    }

    pub fn model(&self) -> SignalModel {
        let d = self.dim();
        let f = (0..d)
            .map(|k| {
                let mut fk = SeparableField::monomial(d, k, 1, self.a[k]).add(&SeparableField::sine(d, k, 1.0, 0.0, self.b[k]));
                if d > 1 {
                    fk = fk.add(&SeparableField::sine(d, (k + 1) % d, 1.0, 0.0, self.c[k]));
                }
                fk
            })
            .collect();
        let h = (0..d)
            .map(|k| SeparableField::monomial(d, k, 1, self.p[k]).add(&SeparableField::sine(d, k, 1.0, 0.0, self.q[k])))
            .collect();
        let g = FieldMatrix::diagonal(self.g.iter().map(|&g| SeparableField::constant(d, g)).collect());
        let rho = FieldMatrix::diagonal(
            (0..d)
                .map(|k| SeparableField::constant(d, self.r[k]).add(&SeparableField::cosine(d, k, 1.0, self.s[k])))
                .collect(),
        );
        SignalModel::new("random", f, h, g, rho).unwrap()
    }

    pub fn f(&self, k: usize, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = self.a[k] * x[k] + self.b[k] * x[k].sin();
        if d > 1 {
            v += self.c[k] * x[(k + 1) % d].sin();
        }
        v
    }

    pub fn div_f(&self, x: &[f64]) -> f64 {
        (0..self.dim()).map(|k| self.a[k] + self.b[k] * x[k].cos()).sum()
    }

    pub fn h(&self, k: usize, x: &[f64]) -> f64 {
        self.p[k] * x[k] + self.q[k] * x[k].sin()
    }

    pub fn rho(&self, k: usize, x: &[f64]) -> f64 {
        self.r[k] + self.s[k] * x[k].cos()
    }

    pub fn drho(&self, k: usize, x: &[f64]) -> f64 {
        -self.s[k] * x[k].sin()
    }

    /// `Σ_kk = g_k² + ρ_kk²`.
    pub fn sigma(&self, k: usize, x: &[f64]) -> f64 {
        self.g[k] * self.g[k] + self.rho(k, x).powi(2)
    }
}

/// Row-major dense square matrix.
#[derive(Debug, Clone)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(n: usize) -> Self {
        Self { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = 1.0;
        }
        m
    }

    pub fn at(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.a[i * self.n + j] * v[j]).sum()).collect()
    }

    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        Self {
            n: self.n,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x + c * y).collect(),
        }
    }

    /// Gauss-Jordan with partial pivoting.
    pub fn inverse(&self) -> Self {
        let n = self.n;
        let mut m = self.a.clone();
        let mut inv = Self::identity(n).a;
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs())).unwrap();
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
                inv.swap(col * n + j, piv * n + j);
            }
            let p = m[col * n + col];
            assert!(p.abs() > 1e-300, "singular matrix");
            for j in 0..n {
                m[col * n + j] /= p;
                inv[col * n + j] /= p;
            }
            for i in 0..n {
                if i != col {
                    let f = m[i * n + col];
                    if f != 0.0 {
                        for j in 0..n {
                            m[i * n + j] -= f * m[col * n + j];
                            inv[i * n + j] -= f * inv[col * n + j];
                        }
                    }
                }
            }
        }
        Self { n, a: inv }
    }
}

/// Multi-index of a row-major position (first coordinate slowest).
pub fn multi_index(mut lin: usize, n: usize, d: usize) -> Vec<usize> {
    let mut idx = vec![0; d];
    for k in (0..d).rev() {
        idx[k] = lin % n;
        lin /= n;
    }
    idx
}

fn shift(idx: &[usize], k: usize, by: isize, n: usize) -> Option<usize> {
    let v = idx[k] as isize + by;
    if v < 0 || v >= n as isize {
        return None;
    }
    let mut j = idx.to_vec();
    j[k] = v as usize;
    Some(j.iter().fold(0, |acc, &i| acc * n + i))
}

/// Dense operators of the semi-implicit scheme on a Dirichlet grid.
pub struct DenseScheme {
    pub m_l: Dense,
    pub m_r: Dense,
    pub lk: Vec<Dense>,
    pub size: usize,
}

impl DenseScheme {
    pub fn new(c: &Coeffs, grid: &Grid, delta: f64) -> Self {
        let d = c.dim();
        let n = grid.n;
        let size = n.pow(d as u32);
        let h = grid.dx();
        let pts = grid.points();
        let coords = |lin: usize| -> (Vec<usize>, Vec<f64>) {
            let idx = multi_index(lin, n, d);
            let x = idx.iter().map(|&i| pts[i]).collect();
            (idx, x)
        };
        let mut diffusion = Dense::zeros(size);
        let mut drift = Dense::zeros(size);
        let mut lk: Vec<Dense> = (0..d).map(|_| Dense::zeros(size)).collect();
        for row in 0..size {
            let (idx, x) = coords(row);
            for k in 0..d {
                // (a_{+}(u_{+} - u) - a_{-}(u - u_{-})) / h², a at mid-edges
                let mut xp = x.clone();
                xp[k] += 0.5 * h;
                let mut xm = x.clone();
                xm[k] -= 0.5 * h;
                let (ap, am) = (c.sigma(k, &xp), c.sigma(k, &xm));
                *diffusion.at(row, row) -= (ap + am) / (h * h);
                let fk = c.f(k, &x);
                let rk = c.rho(k, &x);
                if let Some(j) = shift(&idx, k, 1, n) {
                    *diffusion.at(row, j) += ap / (h * h);
                    *drift.at(row, j) += fk / (2.0 * h);
                    *lk[k].at(row, j) -= rk / (2.0 * h);
                }
                if let Some(j) = shift(&idx, k, -1, n) {
                    *diffusion.at(row, j) += am / (h * h);
                    *drift.at(row, j) -= fk / (2.0 * h);
                    *lk[k].at(row, j) += rk / (2.0 * h);
                }
                *lk[k].at(row, row) += c.h(k, &x) - c.drho(k, &x);
            }
            *drift.at(row, row) += c.div_f(&x);
        }
        let m_l = Dense::identity(size).axpy(-0.5 * delta, &diffusion).inverse();
        let m_r = Dense::identity(size).axpy(-delta, &drift);
        Self { m_l, m_r, lk, size }
    }

    /// `u' = M_L (M_R u + Σ_j Δy_j L_j u + Σ_ij I_ij L_j L_i u)` with product
    /// integrals `I_ij = ½Δy_iΔy_j − ½δ[i = j]`.
    pub fn step(&self, u: &[f64], dy: &[f64], delta: f64) -> Vec<f64> {
        let d = dy.len();
        let mut y = self.m_r.apply(u);
        let lu: Vec<Vec<f64>> = self.lk.iter().map(|l| l.apply(u)).collect();
        for j in 0..d {
            for (yi, v) in y.iter_mut().zip(&lu[j]) {
                *yi += dy[j] * v;
            }
            for i in 0..d {
                let iij = 0.5 * dy[i] * dy[j] - if i == j { 0.5 * delta } else { 0.0 };
                let lji = self.lk[j].apply(&lu[i]);
                for (yi, v) in y.iter_mut().zip(&lji) {
                    *yi += iij * v;
                }
            }
        }
        self.m_l.apply(&y)
    }
}

pub fn gaussian_on_grid(grid: &Grid, mean: &[f64], std: f64) -> Vec<f64> {
    let d = grid.d;
    let pts = grid.points();
    (0..grid.n.pow(d as u32))
        .map(|lin| {
            multi_index(lin, grid.n, d)
                .iter()
                .zip(mean)
                .map(|(&i, m)| (-0.5 * ((pts[i] - m) / std).powi(2)).exp())
                .product()
        })
        .collect()
}

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn rel_dist(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Scalar Kalman-Bucy filter for `dx = a x dt + g dv + r dw`, `dy = c x dt + dw`,
/// integrated with `sub` Euler substeps per observation interval (increments
/// split evenly). Returns the means at the observation times.
pub fn kalman_bucy(a: f64, g: f64, r: f64, c: f64, m0: f64, p0: f64, dy: &[Vec<f64>], delta: f64, sub: usize) -> Vec<(f64, f64)> {
    let dt = delta / sub as f64;
    let (mut m, mut p) = (m0, p0);
    let mut out = vec![(m, p)];
    for inc in dy {
        let piece = inc[0] / sub as f64;
        for _ in 0..sub {
            let k = p * c + r;
            m += a * m * dt + k * (piece - c * m * dt);
            p += (2.0 * a * p + g * g + r * r - k * k) * dt;
        }
        out.push((m, p));
    }
    out
}
