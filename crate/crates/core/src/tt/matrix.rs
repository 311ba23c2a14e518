use crate::error::{Error, Result};
use crate::linalg::gemm;
use crate::tt::vector::{Core3, TtVector};

/// A linear operator on d-dimensional grid functions in TT format.
///
/// Core `k` has shape `r_k × n_k × m_k × r_{k+1}` (row-major). Internally
/// that is exactly an order-3 core with fused mode `n_k·m_k`, so the
/// operator is stored as a [`TtVector`] and rounding, sums and norms are
/// shared with the vector code.
#[derive(Debug, Clone, PartialEq)]
pub struct TtMatrix {
    fused: TtVector,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl TtMatrix {
    /// Builds from order-4 cores given as `(left, n, m, right, data)`.
    pub fn from_cores(cores: Vec<(usize, usize, usize, usize, Vec<f64>)>) -> Result<Self> {
        let mut rows = Vec::with_capacity(cores.len());
        let mut cols = Vec::with_capacity(cores.len());
        let mut c3 = Vec::with_capacity(cores.len());
        for (l, n, m, r, data) in cores {
            if n == 0 || m == 0 {
                return Err(Error::InvalidArgument("matrix mode sizes must be positive".into()));
            }
            rows.push(n);
            cols.push(m);
            c3.push(Core3::new(l, n * m, r, data)?);
        }
        Ok(Self {
            fused: TtVector::from_cores(c3)?,
            rows,
            cols,
        })
    }

    pub(crate) fn from_fused(fused: TtVector, rows: Vec<usize>, cols: Vec<usize>) -> Self {
        debug_assert_eq!(
            fused.mode_sizes(),
            rows.iter().zip(&cols).map(|(n, m)| n * m).collect::<Vec<_>>()
        );
        Self { fused, rows, cols }
    }

    pub fn fused(&self) -> &TtVector {
        &self.fused
    }

    pub fn identity(modes: &[usize]) -> Self {
        let factors: Vec<Vec<f64>> = modes.iter().map(|&n| eye(n)).collect();
        Self::kron(modes, modes, &factors).expect("identity sizes")
    }

    /// Rank-1 operator `A_1 ⊗ … ⊗ A_d` from row-major factors `n_k × m_k`.
    pub fn kron(rows: &[usize], cols: &[usize], factors: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != cols.len() || rows.len() != factors.len() {
            return Err(Error::ShapeMismatch("kron factor count".into()));
        }
        let cores = rows
            .iter()
            .zip(cols)
            .zip(factors)
            .map(|((&n, &m), f)| (1, n, m, 1, f.clone()))
            .collect();
        Self::from_cores(cores)
    }

    /// Diagonal operator `diag(v)`.
    pub fn diag(v: &TtVector) -> Self {
        let modes = v.mode_sizes();
        let cores = v
            .cores()
            .iter()
            .map(|c| {
                let (l, n, r) = c.shape();
                let mut data = vec![0.0; l * n * n * r];
                for a in 0..l {
                    for i in 0..n {
                        for b in 0..r {
                            data[((a * n + i) * n + i) * r + b] = c.get(a, i, b);
                        }
                    }
                }
                Core3::new(l, n * n, r, data).expect("diag core")
            })
            .collect();
        Self {
            fused: TtVector::from_cores_unchecked(cores),
            rows: modes.clone(),
            cols: modes,
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row_sizes(&self) -> &[usize] {
        &self.rows
    }

    pub fn col_sizes(&self) -> &[usize] {
        &self.cols
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.fused.ranks()
    }

    pub fn max_rank(&self) -> usize {
        self.fused.max_rank()
    }

    /// Core `k` as `(left, n, m, right, data)`.
    pub fn core(&self, k: usize) -> (usize, usize, usize, usize, &[f64]) {
        let c = self.fused.core(k);
        let (l, _, r) = c.shape();
        (l, self.rows[k], self.cols[k], r, c.data())
    }

    pub fn entry(&self, row: &[usize], col: &[usize]) -> f64 {
        let idx: Vec<usize> = row
            .iter()
            .zip(col)
            .zip(&self.cols)
            .map(|((&i, &j), &m)| i * m + j)
            .collect();
        self.fused.entry(&idx)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeMismatch(format!(
                "operator shapes {:?}x{:?} vs {:?}x{:?}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self::from_fused(
            self.fused.add(&other.fused)?,
            self.rows.clone(),
            self.cols.clone(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_fused(self.fused.scale(c), self.rows.clone(), self.cols.clone())
    }

    pub fn lin_comb(terms: &[(f64, &TtMatrix)], eps: f64) -> Result<Self> {
        let (first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let mut acc = first.1.scale(first.0);
        for (c, m) in rest {
            acc = acc.add(&m.scale(*c))?;
        }
        Ok(if eps > 0.0 { acc.round(eps) } else { acc })
    }

    pub fn round(&self, eps: f64) -> Self {
        Self::from_fused(self.fused.round(eps), self.rows.clone(), self.cols.clone())
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.fused.norm()
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        self.fused.inner(&other.fused)
    }

    pub fn transpose(&self) -> Self {
        let cores = (0..self.dim())
            .map(|k| {
                let (l, n, m, r, data) = self.core(k);
                let mut out = vec![0.0; data.len()];
                for a in 0..l {
                    for i in 0..n {
                        for j in 0..m {
                            let src = ((a * n + i) * m + j) * r;
                            let dst = ((a * m + j) * n + i) * r;
                            out[dst..dst + r].copy_from_slice(&data[src..src + r]);
                        }
                    }
                }
                Core3::new(l, n * m, r, out).expect("transpose core")
            })
            .collect();
        Self::from_fused(
            TtVector::from_cores_unchecked(cores),
            self.cols.clone(),
            self.rows.clone(),
        )
    }

    /// Entrywise absolute value of every core (not of the operator).
    pub(crate) fn abs_cores(&self) -> Self {
        let cores = self
            .fused
            .cores()
            .iter()
            .map(|c| {
                let (l, nm, r) = c.shape();
                Core3::new(l, nm, r, c.data().iter().map(|v| v.abs()).collect()).unwrap()
            })
            .collect();
        Self::from_fused(
            TtVector::from_cores_unchecked(cores),
            self.rows.clone(),
            self.cols.clone(),
        )
    }

    /// Upper bound on the max-row-sum norm `‖A‖_∞` computable in TT format.
    ///
    /// With absolute-valued cores, `|A(i,j)|` is bounded by a product of
    /// nonnegative matrices; summing over `j` per core and then taking the
    /// entrywise maximum over `i` per core bounds the maximum row sum.
    pub fn norm_inf_bound(&self) -> f64 {
        let a = self.abs_cores();
        let mut acc = vec![1.0];
        for k in 0..a.dim() {
            let (l, n, m, r, data) = a.core(k);
            let mut w = vec![0.0; l * r];
            for x in 0..l {
                for i in 0..n {
                    for y in 0..r {
                        let s: f64 = (0..m).map(|j| data[((x * n + i) * m + j) * r + y]).sum();
                        if s > w[x * r + y] {
                            w[x * r + y] = s;
                        }
                    }
                }
            }
            acc = gemm(&acc, &w, 1, l, r);
        }
        acc[0]
    }

    /// Upper bound on the max-column-sum norm `‖A‖_1`.
    pub fn norm_one_bound(&self) -> f64 {
        self.transpose().norm_inf_bound()
    }

    /// Dense row-major matrix of size `Π n_k × Π m_k`; refuses past `cap` entries.
    pub fn to_dense_capped(&self, cap: usize) -> Result<(Vec<f64>, usize, usize)> {
        let nr: usize = self.rows.iter().product();
        let nc: usize = self.cols.iter().product();
        let full = self.fused.to_dense_capped(cap)?;
        let data = full.into_data();
        // fused index order is (i1 j1 i2 j2 ...); regroup into (i1 i2 ..)(j1 j2 ..)
        let d = self.dim();
        let mut out = vec![0.0; nr * nc];
        let mut idx = vec![0usize; 2 * d];
        for &v in &data {
            let mut row = 0;
            let mut col = 0;
            for k in 0..d {
                row = row * self.rows[k] + idx[2 * k];
                col = col * self.cols[k] + idx[2 * k + 1];
            }
            out[row * nc + col] = v;
            for p in (0..2 * d).rev() {
                let lim = if p % 2 == 0 { self.rows[p / 2] } else { self.cols[p / 2] };
                idx[p] += 1;
                if idx[p] < lim {
                    break;
                }
                idx[p] = 0;
            }
        }
        Ok((out, nr, nc))
    }

    pub fn to_dense(&self) -> Result<(Vec<f64>, usize, usize)> {
        self.to_dense_capped(crate::tt::dense::DEFAULT_DENSE_CAP)
    }

    /// Exact product `self · v`; ranks multiply.
    pub fn matvec(&self, v: &TtVector) -> Result<TtVector> {
        if v.mode_sizes() != self.cols {
            return Err(Error::ShapeMismatch(format!(
                "operator columns {:?} vs vector modes {:?}",
                self.cols,
                v.mode_sizes()
            )));
        }
        let cores = (0..self.dim())
            .map(|k| {
                let (al, n, m, ar, a) = self.core(k);
                let c = v.core(k);
                let (bl, _, br) = c.shape();
                let data = core_product(a, al, n, m, ar, c.data(), bl, 1, br);
                Core3::new(al * bl, n, ar * br, data).unwrap()
            })
            .collect();
        Ok(TtVector::from_cores_unchecked(cores))
    }

    /// Exact product `self · other`; ranks multiply.
    pub fn matmat(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "inner sizes {:?} vs {:?}",
                self.cols, other.rows
            )));
        }
        let cores = (0..self.dim())
            .map(|k| {
                let (al, n, m, ar, a) = self.core(k);
                let (bl, _, p, br, b) = other.core(k);
                let data = core_product(a, al, n, m, ar, b, bl, p, br);
                Core3::new(al * bl, n * p, ar * br, data).unwrap()
            })
            .collect();
        Ok(Self::from_fused(
            TtVector::from_cores_unchecked(cores),
            self.rows.clone(),
            other.cols.clone(),
        ))
    }
}

pub(crate) fn eye(n: usize) -> Vec<f64> {
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        e[i * n + i] = 1.0;
    }
    e
}

/// Kronecker-structured core product:
/// `C[(a,b), i, k, (a',b')] = Σ_j A[a,i,j,a'] B[b,j,k,b']`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn core_product(
    a: &[f64],
    al: usize,
    n: usize,
    m: usize,
    ar: usize,
    b: &[f64],
    bl: usize,
    p: usize,
    br: usize,
) -> Vec<f64> {
    // A as [(a,i,a'), j]
    let mut ap = vec![0.0; al * n * ar * m];
    for x in 0..al {
        for i in 0..n {
            for j in 0..m {
                for y in 0..ar {
                    ap[((x * n + i) * ar + y) * m + j] = a[((x * n + i) * m + j) * ar + y];
                }
            }
        }
    }
    // B as [j, (b,k,b')]
    let mut bp = vec![0.0; m * bl * p * br];
    for x in 0..bl {
        for j in 0..m {
            for k in 0..p {
                for y in 0..br {
                    bp[((j * bl + x) * p + k) * br + y] = b[((x * m + j) * p + k) * br + y];
                }
            }
        }
    }
    let prod = gemm(&ap, &bp, al * n * ar, m, bl * p * br);
    let mut out = vec![0.0; al * bl * n * p * ar * br];
    for x in 0..al {
        for i in 0..n {
            for y in 0..ar {
                let row = ((x * n + i) * ar + y) * bl * p * br;
                for xb in 0..bl {
                    for k in 0..p {
                        for yb in 0..br {
                            let v = prod[row + (xb * p + k) * br + yb];
                            let dst = (((x * bl + xb) * n + i) * p + k) * (ar * br) + y * br + yb;
                            out[dst] = v;
                        }
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_kron(a: &[f64], an: usize, am: usize, b: &[f64], bn: usize, bm: usize) -> Vec<f64> {
        let mut out = vec![0.0; an * bn * am * bm];
        for i in 0..an {
            for j in 0..am {
                for k in 0..bn {
                    for l in 0..bm {
                        out[(i * bn + k) * (am * bm) + j * bm + l] = a[i * am + j] * b[k * bm + l];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn kron_to_dense_matches_explicit() {
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = vec![0.5, -1.0, 2.0, 0.0]; // 2x2
        let m = TtMatrix::kron(&[2, 2], &[3, 2], &[a.clone(), b.clone()]).unwrap();
        let (d, nr, nc) = m.to_dense().unwrap();
        assert_eq!((nr, nc), (4, 6));
        assert_eq!(d, dense_kron(&a, 2, 3, &b, 2, 2));
    }

    #[test]
    fn identity_matvec_is_exact() {
        let v = TtVector::rank_one(&[vec![1.0, 2.0], vec![3.0, -1.0, 0.5]]).unwrap();
        let i = TtMatrix::identity(&[2, 3]);
        let w = i.matvec(&v).unwrap().round(1e-13);
        assert!(w.sub(&v).unwrap().norm() < 1e-14);
    }

    #[test]
    fn transpose_and_norm_bounds() {
        let a = vec![1.0, -2.0, 3.0, 4.0];
        let m = TtMatrix::kron(&[2], &[2], &[a]).unwrap();
        assert_eq!(m.norm_inf_bound(), 7.0);
        assert_eq!(m.norm_one_bound(), 6.0);
        let (t, _, _) = m.transpose().to_dense().unwrap();
        assert_eq!(t, vec![1.0, 3.0, -2.0, 4.0]);
    }
}
