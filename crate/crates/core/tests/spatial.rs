//! Finite-difference assembly against a dense construction of the same scheme.

mod common;

use common::*;
use dmz_tt::linalg::symmetric_eigenvalues;
use dmz_tt::spatial::cache::{assemble_cached, load_operators};
use dmz_tt::spatial::{
    assemble_mixed_operators, assemble_operators, central_diff, forward_diff, lift_1d, Advection, AssemblyConfig,
    FieldMatrix, Grid, SeparableField, SignalModel,
};
use dmz_tt::tt::TtMatrix;

fn dense(m: &TtMatrix) -> Vec<f64> {
    m.to_dense().unwrap().0
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    rel_dist(a, b)
}

#[test]
fn grid_geometry() {
    let g = Grid::new(1.0, 9, 2).unwrap();
    assert!((g.dx() - 0.2).abs() < 1e-15);
    let p = g.points();
    assert!((p[0] + 0.8).abs() < 1e-15 && (p[8] - 0.8).abs() < 1e-15);
    let m = g.midpoints();
    assert_eq!(m.len(), 10);
    assert!((m[0] + 0.9).abs() < 1e-15);
    assert!((g.cell_volume() - 0.04).abs() < 1e-15);
    assert!(Grid::new(0.0, 4, 1).is_err());
    assert!(Grid::new(1.0, 1, 1).is_err());
    assert!(Grid::new(1.0, 4, 0).is_err());
}

#[test]
fn difference_stencils() {
    let g = Grid::new(1.0, 4, 1).unwrap();
    let h = g.dx();
    let u = [1.0, 4.0, 9.0, 16.0];
    let fwd = forward_diff(&g).apply(&u);
    let want = [1.0, 3.0, 5.0, 7.0, -16.0].map(|v| v / h);
    assert!(rel(&fwd, &want) < 1e-14);
    let c = central_diff(&g).apply(&u);
    let want = [4.0, 8.0, 12.0, -9.0].map(|v| v / (2.0 * h));
    assert!(rel(&c, &want) < 1e-14);
    // lifting acts on one direction only
    let g2 = Grid::new(1.0, 3, 2).unwrap();
    let l = lift_1d(&central_diff(&g2), 1, &g2).unwrap();
    let c1 = central_diff(&g2);
    for (i1, j1, i2, j2) in [(0, 1, 0, 2), (2, 2, 2, 1), (1, 0, 1, 0)] {
        assert_eq!(l.entry(&[i1, j1], &[i2, j2]), if i1 == i2 { c1.get(j1, j2) } else { 0.0 });
    }
    assert!(lift_1d(&c1, 2, &g2).is_err());
}

#[test]
fn assembly_matches_dense_construction() {
    let mut r = rng(17);
    for (d, n) in [(1, 9), (2, 6), (2, 5)] {
        let c = Coeffs::random(d, &mut r);
        let grid = Grid::new(2.5, n, d).unwrap();
        let delta = 0.02;
        let ops = assemble_operators(&c.model(), &grid, &AssemblyConfig::new(1e-10, delta)).unwrap();
        let oracle = DenseScheme::new(&c, &grid, delta);
        assert!(rel(&dense(&ops.m_r), &oracle.m_r.a) < 1e-9, "M_R");
        for k in 0..d {
            assert!(rel(&dense(&ops.lk[k]), &oracle.lk[k].a) < 1e-9, "L_{k}");
        }
        assert!(rel(&dense(&ops.m_l), &oracle.m_l.a) < 1e-8, "M_L");
        // L^(i,j) = L_j L_i
        let size = oracle.size;
        for i in 0..d {
            for j in 0..d {
                let mut want = vec![0.0; size * size];
                for row in 0..size {
                    for col in 0..size {
                        want[row * size + col] =
                            (0..size).map(|m| oracle.lk[j].a[row * size + m] * oracle.lk[i].a[m * size + col]).sum();
                    }
                }
                assert!(rel(&dense(ops.lij(i, j).unwrap()), &want) < 1e-8);
            }
        }
    }
}

#[test]
fn implicit_inverse_is_a_contraction() {
    for (model, grid) in [
        (SignalModel::smooth_1d(), Grid::new(4.0, 40, 1).unwrap()),
        (SignalModel::smooth_2d(), Grid::new(4.0, 10, 2).unwrap()),
        (SignalModel::multimode(), Grid::new(4.5, 5, 4).unwrap()),
    ] {
        let ops = assemble_operators(&model, &grid, &AssemblyConfig::new(1e-8, 0.1)).unwrap();
        let (a, n, _) = ops.m_l.to_dense().unwrap();
        let mut ata = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                ata[i * n + j] = (0..n).map(|r| a[r * n + i] * a[r * n + j]).sum();
            }
        }
        let top = symmetric_eigenvalues(&ata, n).unwrap().into_iter().fold(0.0, f64::max);
        assert!(top.sqrt() <= 1.0 + 1e-6, "{}: {}", model.name, top.sqrt());
    }
}

fn log_norm(a: &[f64], n: usize) -> f64 {
    let sym: Vec<f64> = (0..n * n).map(|i| 0.5 * (a[i] + a[(i % n) * n + i / n])).collect();
    symmetric_eigenvalues(&sym, n).unwrap().into_iter().fold(f64::MIN, f64::max)
}

#[test]
fn log_norm_of_weighted_central_difference() {
    // g = 0.7 sin(2 x_1) + 0.4 x_2²  on [-1.5, 1.5]²: Lipschitz constant √(1.4² + 1.2²)
    let grid = Grid::new(1.5, 8, 2).unwrap();
    let g = SeparableField::sine(2, 0, 2.0, 0.0, 0.7).add(&SeparableField::monomial(2, 1, 2, 0.4));
    let lip = (1.4f64.powi(2) + 1.2f64.powi(2)).sqrt();
    let gm = TtMatrix::diag(&g.sample_tt(&grid.point_sets(None)).unwrap());
    for k in 0..2 {
        let c = lift_1d(&central_diff(&grid), k, &grid).unwrap();
        for op in [gm.matmat(&c).unwrap(), c.matmat(&gm).unwrap()] {
            for s in [1.0, -1.0] {
                let (a, n, _) = op.scale(s).to_dense().unwrap();
                assert!(log_norm(&a, n) <= 0.5 * lip + 1e-12);
            }
        }
    }
    // a constant coefficient gives a skew operator
    let c = lift_1d(&central_diff(&grid), 0, &grid).unwrap();
    let (a, n, _) = c.to_dense().unwrap();
    assert!(log_norm(&a, n).abs() < 1e-12);
}

#[test]
fn upwind_drift_is_one_sided() {
    // f = -x: flow towards the origin
    let model = SignalModel::linear_1d(-1.0, 0.5, 0.2, 1.0);
    let grid = Grid::new(2.0, 7, 1).unwrap();
    let mut cfg = AssemblyConfig::new(1e-12, 0.01);
    cfg.advection = Advection::Upwind;
    let ops = assemble_operators(&model, &grid, &cfg).unwrap();
    let (c, n, _) = ops.c_d.to_dense().unwrap();
    let h = grid.dx();
    let pts = grid.points();
    for r in 0..n {
        let f = -pts[r];
        let mut row = vec![0.0; n];
        if f > 0.0 {
            row[r] += f / h;
            if r > 0 {
                row[r - 1] -= f / h;
            }
        } else {
            row[r] -= f / h;
            if r + 1 < n {
                row[r + 1] += f / h;
            }
        }
        for j in 0..n {
            assert!((c[r * n + j] - row[j]).abs() < 1e-9, "row {r} col {j}");
        }
    }
}

fn generator(model: &SignalModel, grid: &Grid, advection: Advection) -> (Vec<f64>, Vec<f64>, usize) {
    let mut cfg = AssemblyConfig::new(1e-12, 0.01);
    cfg.advection = advection;
    let ops = assemble_operators(model, grid, &cfg).unwrap();
    let (l0, n, _) = ops.l0.to_dense().unwrap();
    (l0, dense(&ops.c_d), n)
}

fn min_off_diagonal(a: &[f64], n: usize) -> f64 {
    (0..n * n).filter(|i| i / n != i % n).map(|i| a[i]).fold(f64::INFINITY, f64::min)
}

#[test]
fn stabilized_generators_are_monotone_at_high_peclet() {
    // cubic sensor at N = 8: cell Péclet well above one
    let model = SignalModel::cubic_sensor(1);
    let grid = Grid::new(2.2, 8, 1).unwrap();
    let (central, cc, n) = generator(&model, &grid, Advection::Central);
    let (upwind, cu, _) = generator(&model, &grid, Advection::Upwind);
    let (fitted, cf, _) = generator(&model, &grid, Advection::Fitted);
    assert!(min_off_diagonal(&central, n) < 0.0);
    assert!(min_off_diagonal(&upwind, n) >= -1e-12);
    assert!(min_off_diagonal(&fitted, n) >= -1e-12);
    // D(Pe coth Pe − 1) < D·Pe: fitting adds less diffusion than upwinding
    assert!(rel(&cf, &cc) < rel(&cu, &cc));
}

#[test]
fn mixed_path_agrees_for_constant_diagonal_diffusion() {
    let d = 2;
    let f = vec![
        SeparableField::monomial(d, 0, 1, -0.5).add(&SeparableField::sine(d, 1, 1.0, 0.0, 0.2)),
        SeparableField::sine(d, 1, 1.0, 0.0, -0.4),
    ];
    let h = vec![SeparableField::monomial(d, 0, 1, 1.0), SeparableField::sine(d, 1, 1.0, 0.0, 1.0)];
    let g = FieldMatrix::constant(d, &[0.5, 0.0, 0.0, 0.4]).unwrap();
    let rho = FieldMatrix::constant(d, &[0.3, 0.0, 0.0, 0.2]).unwrap();
    let model = SignalModel::new("constdiag", f, h, g, rho).unwrap();
    let grid = Grid::new(3.0, 7, d).unwrap();
    let cfg = AssemblyConfig::new(1e-10, 0.02);
    let a = assemble_operators(&model, &grid, &cfg).unwrap();
    let b = assemble_mixed_operators(&model, &grid, &cfg).unwrap();
    assert!(b.mixed);
    for (x, y) in [(&a.m_r, &b.m_r), (&a.m_l, &b.m_l), (&a.l0, &b.l0)] {
        assert!(rel(&dense(y), &dense(x)) < 1e-8);
    }
}

#[test]
fn non_diagonal_diffusion_needs_the_mixed_path() {
    let d = 2;
    let g = FieldMatrix::constant(d, &[0.5, 0.2, 0.0, 0.4]).unwrap();
    let model = SignalModel::new(
        "coupled",
        vec![SeparableField::zero(d); d],
        vec![SeparableField::zero(d); d],
        g,
        FieldMatrix::zeros(d),
    )
    .unwrap();
    let grid = Grid::new(2.0, 5, d).unwrap();
    let cfg = AssemblyConfig::new(1e-8, 0.01);
    assert!(assemble_operators(&model, &grid, &cfg).is_err());
    let ops = assemble_mixed_operators(&model, &grid, &cfg).unwrap();
    assert!(ops.m_mix.norm() > 0.0);
}

#[test]
fn model_and_grid_dimensions_must_agree() {
    let grid = Grid::new(2.0, 5, 2).unwrap();
    assert!(assemble_operators(&SignalModel::smooth_1d(), &grid, &AssemblyConfig::new(1e-6, 0.01)).is_err());
    assert!(assemble_operators(&SignalModel::smooth_2d(), &grid, &AssemblyConfig::new(0.0, 0.01)).is_err());
}

#[test]
fn operator_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = SignalModel::smooth_2d();
    let grid = Grid::new(3.0, 6, 2).unwrap();
    let cfg = AssemblyConfig::new(1e-6, 0.02);
    assert!(load_operators(dir.path(), &model, &grid, &cfg).unwrap().is_none());
    let a = assemble_cached(dir.path(), &model, &grid, &cfg).unwrap();
    let b = load_operators(dir.path(), &model, &grid, &cfg).unwrap().expect("cached");
    assert_eq!(dense(&a.m_l), dense(&b.m_l));
    assert_eq!(dense(&a.lk[1]), dense(&b.lk[1]));
    assert_eq!(a.ns_residuals, b.ns_residuals);
    // any key change misses the cache
    let other = AssemblyConfig::new(1e-6, 0.01);
    assert!(load_operators(dir.path(), &model, &grid, &other).unwrap().is_none());
    assert!(load_operators(dir.path(), &SignalModel::multimode(), &Grid::new(3.0, 6, 4).unwrap(), &cfg)
        .unwrap()
        .is_none());
}

#[test]
fn presets_have_the_expected_structure() {
    let m = SignalModel::multimode();
    assert_eq!(m.dim(), 4);
    assert!(m.is_reflection_symmetric());
    assert!(!SignalModel::cubic_sensor(3).is_reflection_symmetric() || SignalModel::cubic_sensor(3).dim() == 3);
    assert!(SignalModel::rank_study(4).dim() == 4);
    assert_ne!(SignalModel::smooth_1d().hash(), SignalModel::smooth_2d().hash());
    assert_eq!(SignalModel::smooth_2d().hash(), SignalModel::smooth_2d().hash());
    // cubic sensor: f = A x + sin(1.5x), h = x³
    let c = SignalModel::cubic_sensor(3);
    let x = [0.3, -0.2, 0.5];
    let mut f = [0.0; 3];
    c.eval_f(&x, &mut f);
    let want0 = -0.8 * 0.3 + (1.5f64 * 0.3).sin();
    let want1 = -0.1 * 0.3 - 0.8 * -0.2 + (1.5f64 * -0.2).sin();
    assert!((f[0] - want0).abs() < 1e-14 && (f[1] - want1).abs() < 1e-14);
    let mut h = [0.0; 3];
    c.eval_h(&x, &mut h);
    assert!((h[2] - 0.125).abs() < 1e-14);
}
