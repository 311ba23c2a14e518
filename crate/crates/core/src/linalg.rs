//! Thin wrappers over faer for the handful of dense kernels the TT code needs.
//!
//! All TT cores are stored row-major with the last index fastest, so most
//! helpers here take or return row-major buffers.

use faer::MatRef;

use crate::error::{Error, Result};

pub(crate) fn view(data: &[f64], rows: usize, cols: usize) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(data, rows, cols)
}

pub(crate) fn to_row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Row-major product `a (m×k) * b (k×n)`.
pub(crate) fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    if m == 0 || n == 0 {
        return Vec::new();
    }
    if k == 0 {
        return vec![0.0; m * n];
    }
    // Small products are faster as plain loops than through the faer dispatcher.
    if m * k * n <= 4096 {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        return out;
    }
    let prod = view(a, m, k) * view(b, k, n);
    to_row_major(prod.as_ref())
}

/// Row-major `aᵀ (m×n) * b (k×n)` where `a` is stored as k×m.
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    if m * k * n <= 4096 {
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            for i in 0..m {
                let av = a[p * m + i];
                if av == 0.0 {
                    continue;
                }
                let row = &mut out[i * n..(i + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        return out;
    }
    let prod = view(a, k, m).transpose() * view(b, k, n);
    to_row_major(prod.as_ref())
}

/// Thin QR of a row-major `rows × cols` matrix with `rows >= cols`.
/// Returns row-major `Q (rows×cols)` and `R (cols×cols)`.
pub(crate) fn qr_thin(a: &[f64], rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
    let k = rows.min(cols);
    let m = view(a, rows, cols).to_owned();
    let qr = m.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let mut r_out = vec![0.0; k * cols];
    for i in 0..k {
        for j in i..cols {
            r_out[i * cols + j] = r[(i, j)];
        }
    }
    (to_row_major(q.as_ref()), r_out)
}

/// Rank-truncated SVD `a ≈ u diag(s) vt`, all row-major.
#[derive(Debug, Clone)]
pub(crate) struct TruncatedSvd {
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub vt: Vec<f64>,
    pub rank: usize,
}

/// Smallest rank whose discarded tail has Frobenius norm `<= abs_tol`.
/// Ties keep the earlier-indexed singular vectors; the result is at least 1.
pub(crate) fn choose_rank(s: &[f64], abs_tol: f64) -> usize {
    let tol2 = abs_tol * abs_tol;
    let mut tail = 0.0;
    let mut rank = s.len();
    while rank > 1 {
        let next = tail + s[rank - 1] * s[rank - 1];
        if next > tol2 {
            break;
        }
        tail = next;
        rank -= 1;
    }
    rank.max(1).min(s.len().max(1))
}

pub(crate) fn truncated_svd(
    a: &[f64],
    rows: usize,
    cols: usize,
    abs_tol: f64,
    max_rank: Option<usize>,
) -> Result<TruncatedSvd> {
    if rows == 0 || cols == 0 {
        return Err(Error::Linalg("empty matrix in SVD".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Linalg("non-finite entry in SVD input".into()));
    }
    let (u_full, s_full, vt_full) = if rows >= 2 * cols {
        // tall: QR first, then SVD of the small triangular factor
        let (q, r) = qr_thin(a, rows, cols);
        let (ur, s, vt) = small_svd(&r, cols, cols)?;
        (gemm(&q, &ur, rows, cols, cols), s, vt)
    } else if cols >= 2 * rows {
        // wide: work on the transpose
        let at = transpose(a, rows, cols);
        let (q, r) = qr_thin(&at, cols, rows);
        // a = rᵀ qᵀ ; svd(rᵀ) = u s wᵀ ; a = u s (q w)ᵀ
        let rt = transpose(&r, rows, rows);
        let (u, s, wt) = small_svd(&rt, rows, rows)?;
        let w = transpose(&wt, rows, rows);
        let qw = gemm(&q, &w, cols, rows, rows);
        (u, s, transpose(&qw, cols, rows))
    } else {
        small_svd(a, rows, cols)?
    };
    let k = s_full.len();
    let mut rank = choose_rank(&s_full, abs_tol);
    if let Some(cap) = max_rank {
        rank = rank.min(cap.max(1));
    }
    let mut u = Vec::with_capacity(rows * rank);
    for i in 0..rows {
        u.extend_from_slice(&u_full[i * k..i * k + rank]);
    }
    let vt = vt_full[..rank * cols].to_vec();
    Ok(TruncatedSvd {
        u,
        s: s_full[..rank].to_vec(),
        vt,
        rank,
    })
}

/// Thin SVD returning row-major `u (rows×k)`, `s`, `vt (k×cols)`.
fn small_svd(a: &[f64], rows: usize, cols: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let m = view(a, rows, cols).to_owned();
    let svd = m
        .thin_svd()
        .map_err(|e| Error::Linalg(format!("SVD failed: {e:?}")))?;
    let k = rows.min(cols);
    let sd = svd.S().column_vector();
    let s: Vec<f64> = (0..k).map(|i| sd[i]).collect();
    let u = to_row_major(svd.U());
    let v = svd.V();
    let mut vt = vec![0.0; k * cols];
    for i in 0..k {
        for j in 0..cols {
            vt[i * cols + j] = v[(j, i)];
        }
    }
    Ok((u, s, vt))
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Eigenvalues of a symmetric row-major matrix, ascending.
pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = view(a, n, n).to_owned();
    let mut ev = m
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Linalg(format!("eigensolve failed: {e:?}")))?;
    ev.sort_by(|x, y| x.total_cmp(y));
    Ok(ev)
}

/// Symmetric eigendecomposition: ascending eigenvalues and row-major
/// eigenvector matrix (columns are eigenvectors).
pub fn symmetric_eigen(a: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = view(a, n, n).to_owned();
    let evd = m
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Linalg(format!("eigensolve failed: {e:?}")))?;
    let sd = evd.S().column_vector();
    let vals: Vec<f64> = (0..n).map(|i| sd[i]).collect();
    Ok((vals, to_row_major(evd.U())))
}

/// Solves `a x = b` for a square row-major `a` and row-major `b (n×k)`.
pub fn solve(a: &[f64], b: &[f64], n: usize, k: usize) -> Result<Vec<f64>> {
    use faer::linalg::solvers::Solve;
    let m = view(a, n, n).to_owned();
    let lu = m.full_piv_lu();
    let x = lu.solve(view(b, n, k));
    let out = to_row_major(x.as_ref());
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Linalg("singular system".into()));
    }
    Ok(out)
}

/// Dense inverse of a square row-major matrix.
pub fn inverse(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut eye = vec![0.0; n * n];
    for i in 0..n {
        eye[i * n + i] = 1.0;
    }
    solve(a, &eye, n, n)
}

pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(t: &TruncatedSvd, rows: usize, cols: usize) -> Vec<f64> {
        let mut us = t.u.clone();
        for i in 0..rows {
            for r in 0..t.rank {
                us[i * t.rank + r] *= t.s[r];
            }
        }
        gemm(&us, &t.vt, rows, t.rank, cols)
    }

    #[test]
    fn choose_rank_keeps_earlier_on_ties() {
        assert_eq!(choose_rank(&[3.0, 1.0, 1.0], 1.0), 2);
        assert_eq!(choose_rank(&[3.0, 1.0, 1.0], 0.0), 3);
        assert_eq!(choose_rank(&[3.0, 1.0, 1.0], 100.0), 1);
    }

    #[test]
    fn svd_paths_reconstruct() {
        for &(rows, cols) in &[(40usize, 5usize), (5, 40), (9, 7)] {
            let a: Vec<f64> = (0..rows * cols)
                .map(|i| ((i * 37 + 11) % 23) as f64 / 7.0 - 1.3)
                .collect();
            let t = truncated_svd(&a, rows, cols, 0.0, None).unwrap();
            let b = reconstruct(&t, rows, cols);
            let err: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            assert!(err < 1e-12 * frobenius(&a), "{rows}x{cols}: {err}");
        }
    }

    #[test]
    fn qr_is_orthonormal() {
        let a: Vec<f64> = (0..60).map(|i| ((i * 13) % 7) as f64 - 2.5).collect();
        let (q, r) = qr_thin(&a, 12, 5);
        let qtq = gemm_tn(&q, &q, 12, 5, 5);
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[i * 5 + j] - expect).abs() < 1e-12);
            }
        }
        let back = gemm(&q, &r, 12, 5, 5);
        for (x, y) in a.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
