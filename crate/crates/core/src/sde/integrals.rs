/// `Î_(i,j) = ½Δy_iΔy_j` off the diagonal and `½((Δy_i)² − δ)` on it (row-major `d × d`).
pub fn iterated_integrals_product(dy: &[f64], delta: f64) -> Vec<f64> {
    let d = dy.len();
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            out[i * d + j] = 0.5 * dy[i] * dy[j];
        }
        out[i * d + i] -= 0.5 * delta;
    }
    out
}

/// Off the diagonal, the Riemann-Itô sum `I_(i,j) ≈ Σ_m (y^i_{t_m} − y^i_τ) Δy^j_m`
/// over the fine increments of one coarse step; on the diagonal the exact
/// `½((Δy_i)² − δ)`, since the quadratic variation of `y^i` over the step is `δ`
/// (row-major `d × d`).
pub fn iterated_integrals_refined(increments: &[Vec<f64>], d: usize, delta: f64) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    let mut run = vec![0.0; d];
    for inc in increments {
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    out[i * d + j] += run[i] * inc[j];
                }
            }
        }
        for i in 0..d {
            run[i] += inc[i];
        }
    }
    for i in 0..d {
        out[i * d + i] = 0.5 * (run[i] * run[i] - delta);
    }
    out
}
