//! Products with on-the-fly truncation ("zip-up").
//!
//! The exact product of two trains multiplies their ranks, which is
//! prohibitive inside Newton-Schulz at larger d and N. The zip-up sweep
//! contracts one core pair at a time, truncates with an SVD and carries the
//! remainder into the next core, so the full-rank product is never formed.

use crate::error::{Error, Result};
use crate::linalg::{frobenius, gemm, truncated_svd};
use crate::tt::matrix::TtMatrix;
use crate::tt::vector::{Core3, TtVector};

struct Factor<'a> {
    left: usize,
    n: usize,
    m: usize,
    right: usize,
    data: &'a [f64],
}

fn zip_up(
    a: &[Factor<'_>],
    b: &[Factor<'_>],
    eps: f64,
    max_rank: Option<usize>,
) -> Result<Vec<Core3>> {
    let d = a.len();
    let local = if d > 1 { eps / ((d - 1) as f64).sqrt() } else { 0.0 };
    let mut cores = Vec::with_capacity(d);
    // carry R[r][a][b]
    let mut carry = vec![1.0];
    let mut r = 1;
    for k in 0..d {
        let (fa, fb) = (&a[k], &b[k]);
        let (al, n, m, ar) = (fa.left, fa.n, fa.m, fa.right);
        let (bl, p, br) = (fb.left, fb.m, fb.right);
        // R as [(r,b)][a]
        let mut rp = vec![0.0; r * bl * al];
        for x in 0..r {
            for y in 0..al {
                for z in 0..bl {
                    rp[(x * bl + z) * al + y] = carry[(x * al + y) * bl + z];
                }
            }
        }
        let t = gemm(&rp, fa.data, r * bl, al, n * m * ar);
        // T[(r,b)][(i,j,a')] -> [(r,i,a')][(b,j)]
        let mut tp = vec![0.0; t.len()];
        for x in 0..r {
            for z in 0..bl {
                let src_row = (x * bl + z) * n * m * ar;
                for i in 0..n {
                    for j in 0..m {
                        for y in 0..ar {
                            tp[((x * n + i) * ar + y) * (bl * m) + z * m + j] =
                                t[src_row + (i * m + j) * ar + y];
                        }
                    }
                }
            }
        }
        let zmat = gemm(&tp, fb.data, r * n * ar, bl * m, p * br);
        // Z[(r,i,a')][(k,b')] -> [(r,i,k)][(a',b')]
        let mut zp = vec![0.0; zmat.len()];
        for x in 0..r {
            for i in 0..n {
                for y in 0..ar {
                    let src_row = ((x * n + i) * ar + y) * p * br;
                    for kk in 0..p {
                        for yb in 0..br {
                            zp[((x * n + i) * p + kk) * (ar * br) + y * br + yb] =
                                zmat[src_row + kk * br + yb];
                        }
                    }
                }
            }
        }
        if k == d - 1 {
            cores.push(Core3::new(r, n * p, 1, zp)?);
            break;
        }
        let rows = r * n * p;
        let cols = ar * br;
        let norm = frobenius(&zp);
        if norm == 0.0 {
            // exact zero product: keep a rank-1 zero chain
            cores.push(Core3::new(r, n * p, 1, vec![0.0; rows])?);
            carry = vec![0.0; cols];
            r = 1;
            continue;
        }
        let svd = truncated_svd(&zp, rows, cols, local * norm, None)?;
        if let Some(cap) = max_rank {
            if svd.rank > cap {
                return Err(Error::RankCapExceeded {
                    rank: svd.rank,
                    cap,
                    context: "zip-up product",
                });
            }
        }
        let mut sv = svd.vt;
        for (q, s) in svd.s.iter().enumerate() {
            for v in &mut sv[q * cols..(q + 1) * cols] {
                *v *= s;
            }
        }
        cores.push(Core3::new(r, n * p, svd.rank, svd.u)?);
        carry = sv;
        r = svd.rank;
    }
    Ok(cores)
}

fn matrix_factors(m: &TtMatrix) -> Vec<Factor<'_>> {
    (0..m.dim())
        .map(|k| {
            let (left, n, mm, right, data) = m.core(k);
            Factor {
                left,
                n,
                m: mm,
                right,
                data,
            }
        })
        .collect()
}

fn orthogonalized(m: &TtMatrix) -> TtMatrix {
    TtMatrix::from_fused(m.fused().right_orthogonalized(), m.row_sizes().to_vec(), m.col_sizes().to_vec())
}

/// `a · b` truncated to relative accuracy about `eps`.
///
/// Errors with [`Error::RankCapExceeded`] if any intermediate rank passes `max_rank`.
pub fn matmat_round(
    a: &TtMatrix,
    b: &TtMatrix,
    eps: f64,
    max_rank: Option<usize>,
) -> Result<TtMatrix> {
    if a.col_sizes() != b.row_sizes() {
        return Err(Error::ShapeMismatch(format!(
            "inner sizes {:?} vs {:?}",
            a.col_sizes(),
            b.row_sizes()
        )));
    }
    // orthonormal right remainders keep the local truncation error from being amplified
    let (a, b) = (orthogonalized(a), orthogonalized(b));
    let cores = zip_up(&matrix_factors(&a), &matrix_factors(&b), eps, max_rank)?;
    let fused = TtVector::from_cores(cores)?;
    let out = TtMatrix::from_fused(fused, a.row_sizes().to_vec(), b.col_sizes().to_vec());
    Ok(out.round(eps))
}

/// `a · v` truncated to relative accuracy about `eps`.
pub fn matvec_round(
    a: &TtMatrix,
    v: &TtVector,
    eps: f64,
    max_rank: Option<usize>,
) -> Result<TtVector> {
    if a.col_sizes() != v.mode_sizes() {
        return Err(Error::ShapeMismatch(format!(
            "operator columns {:?} vs vector modes {:?}",
            a.col_sizes(),
            v.mode_sizes()
        )));
    }
    let (a, v) = (orthogonalized(a), v.right_orthogonalized());
    let vf: Vec<Factor<'_>> = v
        .cores()
        .iter()
        .map(|c| {
            let (left, n, right) = c.shape();
            Factor {
                left,
                n,
                m: 1,
                right,
                data: c.data(),
            }
        })
        .collect();
    let cores = zip_up(&matrix_factors(&a), &vf, eps, max_rank)?;
    Ok(TtVector::from_cores(cores)?.round(eps))
}
