use crate::error::{Error, Result};
use crate::linalg::{frobenius, gemm, gemm_tn, qr_thin, transpose, truncated_svd};
use crate::tt::dense::{DenseTensor, DEFAULT_DENSE_CAP};

/// One order-3 TT core of shape `left × mode × right`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Core3 {
    pub(crate) left: usize,
    pub(crate) mode: usize,
    pub(crate) right: usize,
    pub(crate) data: Vec<f64>,
}

impl Core3 {
    pub fn new(left: usize, mode: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        if left == 0 || mode == 0 || right == 0 {
            return Err(Error::InvalidArgument("core dimensions must be positive".into()));
        }
        if data.len() != left * mode * right {
            return Err(Error::ShapeMismatch(format!(
                "core {left}x{mode}x{right} needs {} entries, got {}",
                left * mode * right,
                data.len()
            )));
        }
        Ok(Self {
            left,
            mode,
            right,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left, self.mode, self.right)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[(a * self.mode + i) * self.right + b]
    }
}

/// A d-dimensional grid function in tensor-train format.
///
/// `ranks()[0] == ranks()[d] == 1` and core `k` has shape
/// `ranks[k] × mode_sizes[k] × ranks[k+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TtVector {
    cores: Vec<Core3>,
}

impl TtVector {
    pub fn from_cores(cores: Vec<Core3>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::InvalidArgument("TT train needs at least one core".into()));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(Error::ShapeMismatch("boundary ranks must be 1".into()));
        }
        for w in cores.windows(2) {
            if w[0].right != w[1].left {
                return Err(Error::ShapeMismatch(format!(
                    "adjacent ranks disagree: {} vs {}",
                    w[0].right, w[1].left
                )));
            }
        }
        Ok(Self { cores })
    }

    pub(crate) fn from_cores_unchecked(cores: Vec<Core3>) -> Self {
        debug_assert!(Self::from_cores(cores.clone()).is_ok());
        Self { cores }
    }

    /// Rank-1 train from one vector per mode.
    pub fn rank_one(factors: &[Vec<f64>]) -> Result<Self> {
        let cores = factors
            .iter()
            .map(|f| Core3::new(1, f.len(), 1, f.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::from_cores(cores)
    }

    pub fn ones(modes: &[usize]) -> Self {
        let f: Vec<Vec<f64>> = modes.iter().map(|&n| vec![1.0; n]).collect();
        Self::rank_one(&f).expect("positive modes")
    }

    pub fn zeros(modes: &[usize]) -> Self {
        let f: Vec<Vec<f64>> = modes.iter().map(|&n| vec![0.0; n]).collect();
        Self::rank_one(&f).expect("positive modes")
    }

    pub fn cores(&self) -> &[Core3] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &Core3 {
        &self.cores[k]
    }

    pub fn dim(&self) -> usize {
        self.cores.len()
    }

    pub fn mode_sizes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.mode).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.left).collect();
        r.push(1);
        r
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    /// Number of stored floats.
    pub fn storage(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    /// TT-SVD with relative Frobenius tolerance `eps`.
    ///
    /// Each of the `d-1` unfoldings is truncated with absolute budget
    /// `eps * ||A||_F / sqrt(d-1)`, so the total error is at most `eps * ||A||_F`.
    pub fn from_dense(full: &DenseTensor, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be >= 0, got {eps}")));
        }
        let d = full.ndim();
        if d < 1 {
            return Err(Error::InvalidArgument("need d >= 1".into()));
        }
        let norm = full.norm();
        if norm == 0.0 {
            return Err(Error::ZeroTensor);
        }
        let shape = full.shape().to_vec();
        if d == 1 {
            return Self::from_cores(vec![Core3::new(1, shape[0], 1, full.data().to_vec())?]);
        }
        let tol = eps * norm / ((d - 1) as f64).sqrt();
        let mut rest = full.data().to_vec();
        let mut r_prev = 1;
        let mut cores = Vec::with_capacity(d);
        for &n in &shape[..d - 1] {
            let rows = r_prev * n;
            let cols = rest.len() / rows;
            let svd = truncated_svd(&rest, rows, cols, tol, None)?;
            cores.push(Core3::new(r_prev, n, svd.rank, svd.u)?);
            let mut sv = svd.vt;
            for (r, s) in svd.s.iter().enumerate() {
                for v in &mut sv[r * cols..(r + 1) * cols] {
                    *v *= s;
                }
            }
            rest = sv;
            r_prev = svd.rank;
        }
        cores.push(Core3::new(r_prev, shape[d - 1], 1, rest)?);
        Self::from_cores(cores)
    }

    /// Full contraction; refuses to allocate more than `cap` entries.
    pub fn to_dense_capped(&self, cap: usize) -> Result<DenseTensor> {
        let modes = self.mode_sizes();
        let total = modes
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .unwrap_or(usize::MAX);
        if total > cap {
            return Err(Error::DenseCapExceeded {
                requested: total,
                cap,
            });
        }
        let mut acc = vec![1.0];
        let mut rows = 1;
        for c in &self.cores {
            acc = gemm(&acc, &c.data, rows, c.left, c.mode * c.right);
            rows *= c.mode;
        }
        DenseTensor::new(modes, acc)
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        self.to_dense_capped(DEFAULT_DENSE_CAP)
    }

    pub fn entry(&self, idx: &[usize]) -> f64 {
        let mut v = vec![1.0];
        for (c, &i) in self.cores.iter().zip(idx) {
            let mut next = vec![0.0; c.right];
            for (a, va) in v.iter().enumerate() {
                if *va == 0.0 {
                    continue;
                }
                let row = &c.data[(a * c.mode + i) * c.right..(a * c.mode + i + 1) * c.right];
                for (n, r) in next.iter_mut().zip(row) {
                    *n += va * r;
                }
            }
            v = next;
        }
        v[0]
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.cores[0].data {
            *v *= c;
        }
        out
    }

    fn check_same_modes(&self, other: &Self) -> Result<()> {
        if self.mode_sizes() != other.mode_sizes() {
            return Err(Error::ShapeMismatch(format!(
                "mode sizes {:?} vs {:?}",
                self.mode_sizes(),
                other.mode_sizes()
            )));
        }
        Ok(())
    }

    /// Exact sum; ranks add.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_modes(other)?;
        let d = self.dim();
        let mut cores = Vec::with_capacity(d);
        for k in 0..d {
            let a = &self.cores[k];
            let b = &other.cores[k];
            let left = if k == 0 { 1 } else { a.left + b.left };
            let right = if k == d - 1 { 1 } else { a.right + b.right };
            let (bl, br) = (
                if k == 0 { 0 } else { a.left },
                if k == d - 1 { 0 } else { a.right },
            );
            let n = a.mode;
            let mut data = vec![0.0; left * n * right];
            for x in 0..a.left {
                for i in 0..n {
                    for y in 0..a.right {
                        data[(x * n + i) * right + y] += a.get(x, i, y);
                    }
                }
            }
            for x in 0..b.left {
                for i in 0..n {
                    for y in 0..b.right {
                        data[((x + bl) * n + i) * right + y + br] += b.get(x, i, y);
                    }
                }
            }
            cores.push(Core3 {
                left,
                mode: n,
                right,
                data,
            });
        }
        Ok(Self { cores })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// `sum_i c_i v_i`, rounded to relative accuracy `eps` (no rounding when `eps == 0`).
    pub fn lin_comb(terms: &[(f64, &TtVector)], eps: f64) -> Result<Self> {
        let (first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let mut acc = first.1.scale(first.0);
        for (c, v) in rest {
            acc = acc.add(&v.scale(*c))?;
        }
        Ok(if eps > 0.0 { acc.round(eps) } else { acc })
    }

    /// Euclidean inner product of the underlying arrays.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_same_modes(other)?;
        let mut phi = vec![1.0];
        for (a, b) in self.cores.iter().zip(&other.cores) {
            // x[a, i, b'] = sum_b phi[a, b] B[b, i, b']
            let x = gemm(&phi, &b.data, a.left, b.left, b.mode * b.right);
            // phi'[a', b'] = sum_{a, i} A[a, i, a'] x[a, i, b']
            phi = gemm_tn(&a.data, &x, a.left * a.mode, a.right, b.right);
        }
        Ok(phi[0])
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Right-to-left orthogonalisation; returns the Frobenius norm, which then
    /// sits entirely in the first core.
    fn orthogonalize_right(cores: &mut [Core3]) -> f64 {
        let d = cores.len();
        for k in (1..d).rev() {
            let (r0, cols) = (cores[k].left, cores[k].mode * cores[k].right);
            let mt = transpose(&cores[k].data, r0, cols);
            let (q, r) = qr_thin(&mt, cols, r0);
            let knew = cols.min(r0);
            cores[k].data = transpose(&q, cols, knew);
            cores[k].left = knew;
            let prev = &cores[k - 1];
            let rows = prev.left * prev.mode;
            let rt = transpose(&r, knew, r0);
            let data = gemm(&prev.data, &rt, rows, r0, knew);
            cores[k - 1].data = data;
            cores[k - 1].right = knew;
        }
        frobenius(&cores[0].data)
    }

    /// Same tensor with cores `1..d` right-orthonormal.
    pub(crate) fn right_orthogonalized(&self) -> Self {
        let mut cores = self.cores.clone();
        Self::orthogonalize_right(&mut cores);
        Self { cores }
    }

    /// TT-rounding: right-to-left QR sweep followed by a left-to-right
    /// truncated-SVD sweep. The result differs from `self` by at most
    /// `eps * ||self||_F` and no rank grows.
    pub fn round(&self, eps: f64) -> Self {
        self.round_capped(eps, None)
    }

    pub(crate) fn round_capped(&self, eps: f64, max_rank: Option<usize>) -> Self {
        let d = self.dim();
        if d == 1 {
            return self.clone();
        }
        let mut cores = self.cores.clone();
        let norm = Self::orthogonalize_right(&mut cores);
        if norm == 0.0 || !norm.is_finite() {
            return Self::zeros(&self.mode_sizes());
        }
        let tol = eps.max(0.0) * norm / ((d - 1) as f64).sqrt();
        for k in 0..d - 1 {
            let (left, mode, right) = cores[k].shape();
            let svd = match truncated_svd(&cores[k].data, left * mode, right, tol, max_rank) {
                Ok(s) => s,
                Err(_) => return Self::zeros(&self.mode_sizes()),
            };
            let rank = svd.rank;
            cores[k] = Core3 {
                left,
                mode,
                right: rank,
                data: svd.u,
            };
            let mut sv = svd.vt;
            for (r, s) in svd.s.iter().enumerate() {
                for v in &mut sv[r * right..(r + 1) * right] {
                    *v *= s;
                }
            }
            let next = &cores[k + 1];
            let ncols = next.mode * next.right;
            let data = gemm(&sv, &next.data, rank, right, ncols);
            cores[k + 1].data = data;
            cores[k + 1].left = rank;
        }
        Self { cores }
    }

    /// Index reflection `i_k -> N_k - 1 - i_k` in every mode.
    pub fn reflect(&self) -> Self {
        let cores = self
            .cores
            .iter()
            .map(|c| {
                let mut data = vec![0.0; c.data.len()];
                for a in 0..c.left {
                    for i in 0..c.mode {
                        let src = (a * c.mode + i) * c.right;
                        let dst = (a * c.mode + (c.mode - 1 - i)) * c.right;
                        data[dst..dst + c.right].copy_from_slice(&c.data[src..src + c.right]);
                    }
                }
                Core3 { data, ..*c }
            })
            .collect();
        Self { cores }
    }

    /// Contract every mode `k` with a weight vector `w[k]`.
    pub fn contract_all(&self, weights: &[Vec<f64>]) -> f64 {
        let mut v = vec![1.0];
        for (c, w) in self.cores.iter().zip(weights) {
            v = contract_mode(&v, c, w);
        }
        v[0]
    }

    /// Vector of length `N_k` obtained by contracting all modes except `k`
    /// with the given weights.
    pub fn partial_contract(&self, k: usize, weights: &[Vec<f64>]) -> Vec<f64> {
        let d = self.dim();
        let mut left = vec![1.0];
        for j in 0..k {
            left = contract_mode(&left, &self.cores[j], &weights[j]);
        }
        let mut right = vec![1.0];
        for j in (k + 1..d).rev() {
            let c = &self.cores[j];
            let mut next = vec![0.0; c.left];
            for (a, n) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for i in 0..c.mode {
                    let row = &c.data[(a * c.mode + i) * c.right..(a * c.mode + i + 1) * c.right];
                    let dot: f64 = row.iter().zip(&right).map(|(x, y)| x * y).sum();
                    s += weights[j][i] * dot;
                }
                *n = s;
            }
            right = next;
        }
        let c = &self.cores[k];
        (0..c.mode)
            .map(|i| {
                let mut s = 0.0;
                for (a, la) in left.iter().enumerate() {
                    let row = &c.data[(a * c.mode + i) * c.right..(a * c.mode + i + 1) * c.right];
                    s += la * row.iter().zip(&right).map(|(x, y)| x * y).sum::<f64>();
                }
                s
            })
            .collect()
    }
}

fn contract_mode(v: &[f64], c: &Core3, w: &[f64]) -> Vec<f64> {
    let mut next = vec![0.0; c.right];
    for (a, va) in v.iter().enumerate() {
        if *va == 0.0 {
            continue;
        }
        for (i, wi) in w.iter().enumerate() {
            let f = va * wi;
            if f == 0.0 {
                continue;
            }
            let row = &c.data[(a * c.mode + i) * c.right..(a * c.mode + i + 1) * c.right];
            for (n, r) in next.iter_mut().zip(row) {
                *n += f * r;
            }
        }
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_train(modes: &[usize], ranks: &[usize], rng: &mut ChaCha8Rng) -> TtVector {
        let cores = modes
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let (l, r) = (ranks[k], ranks[k + 1]);
                Core3::new(l, n, r, (0..l * n * r).map(|_| rng.random::<f64>() - 0.5).collect())
                    .unwrap()
            })
            .collect();
        TtVector::from_cores(cores).unwrap()
    }

    /// Naive contraction oracle: explicit loop over all multi-indices.
    fn naive_dense(v: &TtVector) -> DenseTensor {
        DenseTensor::from_fn(v.mode_sizes(), |idx| {
            let mut row = vec![1.0];
            for (c, &i) in v.cores().iter().zip(idx) {
                let mut next = vec![0.0; c.right];
                for (a, ra) in row.iter().enumerate() {
                    for (b, n) in next.iter_mut().enumerate() {
                        *n += ra * c.get(a, i, b);
                    }
                }
                row = next;
            }
            row[0]
        })
    }

    #[test]
    fn ones_to_dense() {
        let d = TtVector::ones(&[2, 2]).to_dense().unwrap();
        assert_eq!(d.data(), &[1.0; 4]);
    }

    #[test]
    fn to_dense_matches_naive_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_train(&[3, 4, 2], &[1, 2, 3, 1], &mut rng);
        let a = v.to_dense().unwrap();
        let b = naive_dense(&v);
        assert!(a.distance(&b) < 1e-14);
        assert!((v.entry(&[2, 1, 1]) - b.get(&[2, 1, 1])).abs() < 1e-14);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let v = TtVector::ones(&[10, 10, 10]);
        assert!(matches!(
            v.to_dense_capped(999),
            Err(Error::DenseCapExceeded { requested: 1000, .. })
        ));
    }

    #[test]
    fn outer_product_has_unit_ranks() {
        let a = [1.0, 2.0, -1.0];
        let b = [0.5, 3.0];
        let c = [1.0, -2.0, 4.0, 0.1];
        let full = DenseTensor::from_fn(vec![3, 2, 4], |i| a[i[0]] * b[i[1]] * c[i[2]]);
        let tt = TtVector::from_dense(&full, 1e-12).unwrap();
        assert_eq!(tt.ranks(), vec![1, 1, 1, 1]);
        assert!(tt.to_dense().unwrap().distance(&full) < 1e-12 * full.norm());
    }

    #[test]
    fn exact_path_on_random_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let full = DenseTensor::from_fn(vec![4, 4, 4], |_| rng.random::<f64>() - 0.5);
        let tt = TtVector::from_dense(&full, 0.0).unwrap();
        assert!(tt.to_dense().unwrap().distance(&full) <= 1e-12 * full.norm());
    }

    #[test]
    fn zero_tensor_rejected() {
        let full = DenseTensor::zeros(vec![2, 3]);
        assert!(matches!(TtVector::from_dense(&full, 1e-3), Err(Error::ZeroTensor)));
    }

    #[test]
    fn add_negation_cancels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = random_train(&[3, 3, 3], &[1, 2, 2, 1], &mut rng);
        let z = v.add(&v.scale(-1.0)).unwrap();
        assert!(z.norm() <= 1e-12 * v.norm());
        let s = v.scale(2.0);
        assert!((s.norm() - 2.0 * v.norm()).abs() <= 1e-13 * v.norm());
    }

    #[test]
    fn round_restores_doubled_ranks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_train(&[4, 5, 3, 4], &[1, 2, 3, 2, 1], &mut rng);
        let doubled = v.add(&v).unwrap().scale(0.5);
        assert_eq!(doubled.ranks(), vec![1, 4, 6, 4, 1]);
        let r = doubled.round(1e-12);
        // oracle: TT-SVD of the dense reconstruction
        let oracle = TtVector::from_dense(&v.to_dense().unwrap(), 1e-12).unwrap();
        assert_eq!(r.ranks(), oracle.ranks());
        assert_eq!(r.ranks(), vec![1, 2, 3, 2, 1]);
        assert!(r.to_dense().unwrap().distance(&v.to_dense().unwrap()) < 1e-11 * v.norm());
    }

    #[test]
    fn round_with_huge_tolerance_gives_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random_train(&[4, 4, 4], &[1, 3, 3, 1], &mut rng);
        let r = v.round(2.0);
        assert_eq!(r.max_rank(), 1);
        let err = r.sub(&v).unwrap().norm();
        assert!(err <= 2.0 * v.norm());
    }

    #[test]
    fn round_zero_eps_preserves_orthogonalized_train() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = random_train(&[3, 4, 3], &[1, 3, 3, 1], &mut rng).round(0.0);
        let r = v.round(0.0);
        let (a, b) = (v.to_dense().unwrap(), r.to_dense().unwrap());
        assert!(a.distance(&b) <= 1e-13 * a.norm());
    }

    #[test]
    fn reflect_reverses_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = random_train(&[3, 4], &[1, 2, 1], &mut rng);
        let r = v.reflect();
        assert!((r.entry(&[0, 1]) - v.entry(&[2, 2])).abs() < 1e-15);
    }

    #[test]
    fn partial_contract_matches_dense_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_train(&[3, 4, 2], &[1, 2, 2, 1], &mut rng);
        let dense = v.to_dense().unwrap();
        let w: Vec<Vec<f64>> = v.mode_sizes().iter().map(|&n| vec![1.0; n]).collect();
        let m = v.partial_contract(1, &w);
        for (j, mj) in m.iter().enumerate() {
            let mut s = 0.0;
            for i in 0..3 {
                for k in 0..2 {
                    s += dense.get(&[i, j, k]);
                }
            }
            assert!((s - mj).abs() < 1e-13);
        }
        let total: f64 = dense.data().iter().sum();
        assert!((v.contract_all(&w) - total).abs() < 1e-13);
    }
}
