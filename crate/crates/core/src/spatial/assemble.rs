//! Offline stage: TT assembly of the discrete generator and the Milstein
//! update matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::fd::{central_diff, forward_diff, kron_of, Mat1};
use crate::spatial::field::{SeparableField, Term};
use crate::spatial::grid::Grid;
use crate::spatial::model::SignalModel;
use crate::tt::{newton_schulz_inverse, Core3, DenseTensor, NewtonSchulzConfig, TtMatrix, TtVector};

/// Largest dense sample used to build `|f_k|` on the support of `f_k`.
const ABS_SAMPLE_CAP: usize = 1 << 22;

/// Discretization of the drift term `f·∇u`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Advection {
    /// Second-order central differences.
    #[default]
    Central,
    /// First-order upwind differences, written as central differences plus
    /// the numerical diffusion `(Δx/2) M_{|f_k|} D₂^(k)`. Stable at cell
    /// Péclet numbers above one, where central differences produce
    /// oscillating negative lobes.
    Upwind,
    /// Exponential fitting: central differences plus the artificial diffusion
    /// `D (Pe coth Pe − 1)`, `D = ½Σ_kk`, `Pe = |f_k|Δx/(2D)`. Monotone at any
    /// Péclet number and `O(Δx²)` where `Pe` is small.
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    /// Relative TT accuracy `ε` of the offline operators.
    pub eps: f64,
    /// Time step baked into `M_L` and `M_R`.
    pub delta: f64,
    /// Newton-Schulz stopping tolerance for `M_L`.
    pub ns_tol: f64,
    /// Rounding tolerance inside Newton-Schulz.
    pub ns_eps_round: f64,
    pub ns_max_iter: usize,
    pub ns_rank_cap: usize,
    /// Relative rounding tolerance for `L^(i,j)`; defaults to `ε (Δx)^{d/2}`.
    pub lij_eps: Option<f64>,
    /// Use the mixed-derivative generator (needed when `GGᵀ + ρρᵀ` is not diagonal).
    pub mixed: bool,
    /// Skip forming the `d²` operators `L^(i,j)` (the online step does not need them).
    pub skip_lij: bool,
    #[serde(default)]
    pub advection: Advection,
}

impl AssemblyConfig {
    pub fn new(eps: f64, delta: f64) -> Self {
        Self {
            eps,
            delta,
            ns_tol: eps,
            ns_eps_round: eps * 0.1,
            ns_max_iter: 100,
            ns_rank_cap: 256,
            lij_eps: None,
            mixed: false,
            skip_lij: false,
            advection: Advection::Central,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !(self.delta >= 0.0) || !(self.ns_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need eps > 0, delta >= 0 and ns_tol > 0 (got {}, {}, {})",
                self.eps, self.delta, self.ns_tol
            )));
        }
        Ok(())
    }

    fn ns(&self) -> NewtonSchulzConfig {
        NewtonSchulzConfig {
            tol: self.ns_tol,
            eps_round: self.ns_eps_round,
            max_iter: self.ns_max_iter,
            rank_cap: self.ns_rank_cap,
            adaptive: 0.1,
        }
    }
}

/// TT operators consumed by the online stage.
#[derive(Debug, Clone)]
pub struct DiscretizedOperators {
    pub grid: Grid,
    pub eps: f64,
    pub delta: f64,
    pub mixed: bool,
    pub delta_g: TtMatrix,
    pub delta_rho: TtMatrix,
    pub c_d: TtMatrix,
    /// `M_(0)`, or `M^mix_(0)` on the mixed path.
    pub m0: TtMatrix,
    /// Mixed second-derivative part (zero on the diagonal path).
    pub m_mix: TtMatrix,
    pub l0: TtMatrix,
    pub lk: Vec<TtMatrix>,
    /// Row-major `d × d`; entry `(i, j)` is `L^(i,j) = L_j L_i`. Empty if skipped.
    pub lij: Vec<TtMatrix>,
    pub m_l: TtMatrix,
    pub m_r: TtMatrix,
    /// `M_R − (δ/2) Σ_i L_i L_i`: absorbs the `−δ/2` diagonal part of the
    /// product-form iterated integrals so a step only needs `B = Σ_j Δy_j L_j`.
    pub m_r_product: TtMatrix,
    /// Newton-Schulz residual history for `M_L`.
    pub ns_residuals: Vec<f64>,
}

impl DiscretizedOperators {
    pub fn dim(&self) -> usize {
        self.grid.d
    }

    pub fn lij(&self, i: usize, j: usize) -> Option<&TtMatrix> {
        self.lij.get(i * self.grid.d + j)
    }

    pub fn max_rank(&self) -> usize {
        let mut r = self
            .lk
            .iter()
            .chain([&self.m_l, &self.m_r, &self.m_r_product, &self.l0])
            .map(|m| m.max_rank())
            .max()
            .unwrap_or(1);
        for m in &self.lij {
            r = r.max(m.max_rank());
        }
        r
    }
}

type Special<'a> = (usize, &'a dyn Fn(&dyn Fn(f64) -> f64) -> Mat1);

/// Rank-1 operator of one separable term: `diag(term)` in every direction,
/// except the listed ones which get a custom 1-D factor built from the
/// term's univariate restriction.
fn kron_term(term: &Term, grid: &Grid, special: &[Special<'_>], scale: f64) -> Result<TtMatrix> {
    let pts = grid.points();
    let mut factors: Vec<Mat1> = (0..grid.d)
        .map(|k| {
            let g = |x: f64| term.eval_coord(k, x);
            match special.iter().find(|(dir, _)| *dir == k) {
                Some((_, build)) => build(&g),
                None => Mat1::diag(&pts.iter().map(|&x| g(x)).collect::<Vec<_>>()),
            }
        })
        .collect();
    factors[0] = factors[0].scale(term.coeff * scale);
    kron_of(&factors)
}

fn accumulate(acc: Option<TtMatrix>, m: TtMatrix) -> Result<Option<TtMatrix>> {
    Ok(Some(match acc {
        None => m,
        Some(a) => a.add(&m)?,
    }))
}

fn zero_op(grid: &Grid) -> TtMatrix {
    TtMatrix::identity(&grid.modes()).scale(0.0)
}

/// `diag(g(X))`, or `diag(g(X̄^(k)))` with direction `k` on mid-edge points.
pub fn diag_of_field(g: &SeparableField, grid: &Grid, mid: Option<usize>) -> Result<TtMatrix> {
    let v = g.sample_tt(&grid.point_sets(mid))?;
    Ok(TtMatrix::diag(&v.round(1e-15)))
}

/// `Σ_i −(C̄^(i))ᵀ M̄_{a_ii} C̄^(i)` for the diagonal of a symbolic matrix field.
pub fn second_order(diag: &[SeparableField], grid: &Grid) -> Result<TtMatrix> {
    let cbar = forward_diff(grid);
    let cbar_t = cbar.transpose();
    let mid = grid.midpoints();
    let mut acc = None;
    for (i, a) in diag.iter().enumerate() {
        for t in a.terms() {
            let build = |g: &dyn Fn(f64) -> f64| {
                let w: Vec<f64> = mid.iter().map(|&x| g(x)).collect();
                cbar_t.matmul(&Mat1::diag(&w)).matmul(&cbar).scale(-1.0)
            };
            acc = accumulate(acc, kron_term(t, grid, &[(i, &build)], 1.0)?)?;
        }
    }
    Ok(acc.unwrap_or_else(|| zero_op(grid)))
}

/// `Σ_k c_k M_{g_k} C^(k)`: first-order operator with coefficient fields `g_k`.
pub fn first_order(coeffs: &[SeparableField], grid: &Grid, scale: f64) -> Result<TtMatrix> {
    let c1 = central_diff(grid);
    let pts = grid.points();
    let mut acc = None;
    for (k, gk) in coeffs.iter().enumerate() {
        for t in gk.terms() {
            let build = |g: &dyn Fn(f64) -> f64| {
                let w: Vec<f64> = pts.iter().map(|&x| g(x)).collect();
                Mat1::diag(&w).matmul(&c1)
            };
            acc = accumulate(acc, kron_term(t, grid, &[(k, &build)], scale)?)?;
        }
    }
    Ok(acc.unwrap_or_else(|| zero_op(grid)))
}

/// `g(x)` on the grid as a TT, for a function of the coordinates in
/// `support` only: sampled densely there, compressed with TT-SVD, and
/// extended by rank-preserving constant cores.
fn sample_on_support(
    support: &[usize],
    grid: &Grid,
    eps: f64,
    mut g: impl FnMut(&[f64]) -> f64,
) -> Result<TtVector> {
    let pts = grid.points();
    let n = grid.n;
    let mut x = vec![0.0; grid.d];
    if support.is_empty() {
        return Ok(TtVector::ones(&grid.modes()).scale(g(&x)));
    }
    if n.checked_pow(support.len() as u32).filter(|&s| s <= ABS_SAMPLE_CAP).is_none() {
        return Err(Error::InvalidArgument(format!(
            "drift stabilization: a coefficient depends on {} coordinates, too many to sample",
            support.len()
        )));
    }
    let full = DenseTensor::from_fn(vec![n; support.len()], |idx| {
        for (&k, &i) in support.iter().zip(idx) {
            x[k] = pts[i];
        }
        g(&x)
    });
    if full.norm() == 0.0 {
        return Ok(TtVector::zeros(&grid.modes()));
    }
    let local = TtVector::from_dense(&full, eps)?;
    let mut cores = Vec::with_capacity(grid.d);
    let mut r = 1;
    let mut next = 0;
    for k in 0..grid.d {
        if next < support.len() && support[next] == k {
            let c = local.core(next).clone();
            r = c.shape().2;
            cores.push(c);
            next += 1;
        } else {
            let mut data = vec![0.0; r * n * r];
            for a in 0..r {
                for i in 0..n {
                    data[(a * n + i) * r + a] = 1.0;
                }
            }
            cores.push(Core3::new(r, n, r, data)?);
        }
    }
    TtVector::from_cores(cores)
}

fn merged(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// `Pe coth Pe − 1`, by its series near zero.
fn fitting_factor(pe: f64) -> f64 {
    if pe < 1e-3 {
        pe * pe / 3.0
    } else {
        pe / pe.tanh() - 1.0
    }
}

/// Artificial diffusion `Σ_k M_{a_k} D₂^(k)` added to the drift operator
/// (`D₂ = −C̄ᵀC̄`, the Dirichlet second difference). Subtracting it from
/// `Σ_k M_{f_k} C^(k)` gives the scheme selected by `advection`.
pub fn drift_stabilization(model: &SignalModel, grid: &Grid, advection: Advection, eps: f64) -> Result<TtMatrix> {
    let dx = grid.dx();
    let cbar = forward_diff(grid);
    let d2 = cbar.transpose().matmul(&cbar).scale(-1.0);
    let sigma = model.sigma();
    let mut acc = None;
    for (k, fk) in model.f.iter().enumerate() {
        if fk.is_zero() {
            continue;
        }
        let coeff = match advection {
            Advection::Central => continue,
            Advection::Upwind => sample_on_support(&fk.support(), grid, eps, |x| 0.5 * dx * fk.eval(x).abs())?,
            Advection::Fitted => {
                let skk = sigma.get(k, k);
                sample_on_support(&merged(&fk.support(), &skk.support()), grid, eps, |x| {
                    let diff = 0.5 * skk.eval(x);
                    let speed = fk.eval(x).abs();
                    if diff <= 0.0 {
                        0.5 * dx * speed
                    } else {
                        diff * fitting_factor(speed * dx / (2.0 * diff))
                    }
                })?
            }
        };
        let op = TtMatrix::diag(&coeff).matmat(&crate::spatial::fd::lift_1d(&d2, k, grid)?)?;
        acc = accumulate(acc, op)?;
    }
    Ok(acc.unwrap_or_else(|| zero_op(grid)))
}

/// `Σ_{i≠j} C^(i) M_{σ_ij} C^(j)`.
pub fn mixed_second_order(model: &SignalModel, grid: &Grid) -> Result<TtMatrix> {
    let sigma = model.sigma();
    let c1 = central_diff(grid);
    let pts = grid.points();
    let mut acc = None;
    for i in 0..grid.d {
        for j in 0..grid.d {
            if i == j {
                continue;
            }
            for t in sigma.get(i, j).terms() {
                let left = |g: &dyn Fn(f64) -> f64| {
                    let w: Vec<f64> = pts.iter().map(|&x| g(x)).collect();
                    c1.matmul(&Mat1::diag(&w))
                };
                let right = |g: &dyn Fn(f64) -> f64| {
                    let w: Vec<f64> = pts.iter().map(|&x| g(x)).collect();
                    Mat1::diag(&w).matmul(&c1)
                };
                acc = accumulate(acc, kron_term(t, grid, &[(i, &left), (j, &right)], 1.0)?)?;
            }
        }
    }
    Ok(acc.unwrap_or_else(|| zero_op(grid)))
}

/// Exact (unrounded) `L_k = M_{h_k − ∇·ρ_{·k}} − Σ_i M_{ρ_ik} C^(i)`.
pub fn observation_operator(model: &SignalModel, grid: &Grid, k: usize) -> Result<TtMatrix> {
    let diag = diag_of_field(&model.m_k(k), grid, None)?;
    let col: Vec<SeparableField> = (0..grid.d).map(|i| model.rho.get(i, k).clone()).collect();
    diag.add(&first_order(&col, grid, -1.0)?)
}

fn diagonal_entries(m: &crate::spatial::field::FieldMatrix) -> Vec<SeparableField> {
    (0..m.dim()).map(|i| m.get(i, i).clone()).collect()
}

fn check_model(model: &SignalModel, grid: &Grid) -> Result<()> {
    if model.dim() != grid.d {
        return Err(Error::ShapeMismatch(format!(
            "model dimension {} vs grid dimension {}",
            model.dim(),
            grid.d
        )));
    }
    Ok(())
}

/// `Id − (δ/2)(Δ_G + Δ_ρ)`, exactly (no rounding).
pub fn implicit_matrix(model: &SignalModel, grid: &Grid, delta: f64) -> Result<TtMatrix> {
    check_model(model, grid)?;
    let dg = second_order(&diagonal_entries(&model.gg()), grid)?;
    let dr = second_order(&diagonal_entries(&model.rr()), grid)?;
    // the raw sum carries redundant ranks that Newton-Schulz would square
    Ok(TtMatrix::identity(&grid.modes())
        .sub(&dg.add(&dr)?.scale(0.5 * delta))?
        .round(1e-14))
}

/// Offline stage of the semi-implicit Milstein scheme.
///
/// Rounding tolerances (relative): `ε(Δx)^{d/2+2}` for the drift/diffusion
/// operators and `M_R`, `ε(Δx)^{d/2+1}` for `L_k`, `ε(Δx)^{d/2}` for `L^(i,j)`.
pub fn assemble_operators(
    model: &SignalModel,
    grid: &Grid,
    cfg: &AssemblyConfig,
) -> Result<DiscretizedOperators> {
    cfg.validate()?;
    check_model(model, grid)?;
    if !cfg.mixed && !model.is_diagonal() {
        return Err(Error::InvalidArgument(
            "GGᵀ + ρρᵀ is not diagonal; use the mixed-derivative path".into(),
        ));
    }
    let d = grid.d;
    let dx = grid.dx();
    let half = d as f64 / 2.0;
    let tol0 = cfg.eps * dx.powf(half + 2.0);
    let tolk = cfg.eps * dx.powf(half + 1.0);
    let tolij = cfg.lij_eps.unwrap_or(cfg.eps * dx.powf(half));
    let delta = cfg.delta;
    let id = TtMatrix::identity(&grid.modes());

    let dg = second_order(&diagonal_entries(&model.gg()), grid)?;
    let dr = second_order(&diagonal_entries(&model.rr()), grid)?;
    let c_d = match cfg.advection {
        Advection::Central => first_order(&model.f, grid, 1.0)?,
        scheme => {
            let central = first_order(&model.f, grid, 1.0)?;
            central.sub(&drift_stabilization(model, grid, scheme, tol0)?)?.round(tol0)
        }
    };
    let div_f = model.div_f();
    let (m0, m_mix) = if cfg.mixed {
        let dd = model.sigma().double_divergence();
        let m0 = diag_of_field(&div_f.sub(&dd.scale(0.5 * delta)), grid, None)?;
        (m0, mixed_second_order(model, grid)?)
    } else {
        (diag_of_field(&div_f, grid, None)?, zero_op(grid))
    };

    let diffusion = dg.add(&dr)?;
    let l0 = TtMatrix::lin_comb(
        &[(0.5, &diffusion), (0.5, &m_mix), (-1.0, &c_d), (-1.0, &m0)],
        tol0,
    )?;
    let m_r = TtMatrix::lin_comb(
        &[(1.0, &id), (0.5 * delta, &m_mix), (-delta, &c_d), (-delta, &m0)],
        tol0,
    )?;
    let lk = (0..d)
        .map(|k| Ok(observation_operator(model, grid, k)?.round(tolk)))
        .collect::<Result<Vec<_>>>()?;

    let mut lsq: Option<TtMatrix> = None;
    for l in &lk {
        lsq = accumulate(lsq, l.matmat(l)?.round(tolij))?;
    }
    let lsq = lsq.expect("d >= 1").round(tolij);
    let m_r_product = m_r.sub(&lsq.scale(0.5 * delta))?.round(tol0);

    let lij = if cfg.skip_lij {
        Vec::new()
    } else {
        let mut v = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                v.push(lk[j].matmat(&lk[i])?.round(tolij));
            }
        }
        v
    };

    let a = id.sub(&diffusion.scale(0.5 * delta))?.round(tol0);
    let ns = newton_schulz_inverse(&a, &cfg.ns())?;

    Ok(DiscretizedOperators {
        grid: *grid,
        eps: cfg.eps,
        delta,
        mixed: cfg.mixed,
        delta_g: dg.round(tol0),
        delta_rho: dr.round(tol0),
        c_d: c_d.round(tol0),
        m0: m0.round(tol0),
        m_mix: m_mix.round(tol0),
        l0,
        lk,
        lij,
        m_l: ns.inverse,
        m_r,
        m_r_product,
        ns_residuals: ns.residuals,
    })
}

/// Same contract as [`assemble_operators`] on the mixed-derivative path.
pub fn assemble_mixed_operators(
    model: &SignalModel,
    grid: &Grid,
    cfg: &AssemblyConfig,
) -> Result<DiscretizedOperators> {
    let mut c = *cfg;
    c.mixed = true;
    assemble_operators(model, grid, &c)
}
