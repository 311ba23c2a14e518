//! Online filter stage against the dense scheme and the Kalman-Bucy filter.

mod common;

use common::*;
use dmz_tt::filter::{
    extract_estimate, init_filter, milstein_step, negativity, run_filter, write_marginal_csv, FilterConfig, InitDensity,
    IntegralMode, StepPath,
};
use dmz_tt::sde::{iterated_integrals_product, simulate_truth, InitialState, PathConfig};
use dmz_tt::spatial::{assemble_operators, AssemblyConfig, Grid, SignalModel};

/// Dense step with arbitrary iterated integrals, `L^(i,j) = L_j L_i`.
fn dense_step(s: &DenseScheme, u: &[f64], dy: &[f64], iij: &[f64]) -> Vec<f64> {
    let d = dy.len();
    let mut y = s.m_r.apply(u);
    let lu: Vec<Vec<f64>> = s.lk.iter().map(|l| l.apply(u)).collect();
    for j in 0..d {
        y.iter_mut().zip(&lu[j]).for_each(|(a, b)| *a += dy[j] * b);
        for i in 0..d {
            let lji = s.lk[j].apply(&lu[i]);
            y.iter_mut().zip(&lji).for_each(|(a, b)| *a += iij[i * d + j] * b);
        }
    }
    s.m_l.apply(&y)
}

#[test]
fn every_step_path_matches_dense_scheme() {
    let mut rng = rng(31);
    let (d, eps, delta) = (2, 1e-10, 0.02);
    let c = Coeffs::random(d, &mut rng);
    let grid = Grid::new(2.5, 6, d).unwrap();
    let ops = assemble_operators(&c.model(), &grid, &AssemblyConfig::new(eps, delta)).unwrap();
    let dense = DenseScheme::new(&c, &grid, delta);
    let mean = [0.2, -0.3];
    let u0 = unit(&gaussian_on_grid(&grid, &mean, 0.9));
    let dy: Vec<f64> = (0..d).map(|_| delta.sqrt() * normal(&mut rng)).collect();
    // a generic, non-symmetric set of iterated integrals
    let iij = vec![0.5 * (dy[0] * dy[0] - delta), 0.013, -0.004, 0.5 * (dy[1] * dy[1] - delta)];
    let prod = iterated_integrals_product(&dy, delta);
    for path in [StepPath::Direct, StepPath::Factored] {
        for mode in [IntegralMode::Product, IntegralMode::Refined] {
            let mut fc = FilterConfig::new(grid, eps, delta, InitDensity::isotropic(mean.to_vec(), 0.9));
            fc.path = path;
            fc.integral_mode = mode;
            let state = init_filter(&fc, &ops).unwrap();
            // the factored product path assumes product integrals
            let integrals = if path == StepPath::Factored && mode == IntegralMode::Product { &prod } else { &iij };
            let next = milstein_step(&state, &dy, integrals, &ops, &fc).unwrap();
            let want = unit(&dense_step(&dense, &u0, &dy, integrals));
            let got = unit(&next.density.to_dense().unwrap().into_data());
            let err = rel_dist(&got, &want);
            assert!(err < 1e-8, "{path:?} {mode:?}: {err}");
        }
    }
}

#[test]
fn renormalization_only_rescales() {
    let model = SignalModel::smooth_2d();
    let grid = Grid::new(3.0, 12, 2).unwrap();
    let delta = 0.02;
    let ops = assemble_operators(&model, &grid, &AssemblyConfig::new(1e-7, delta)).unwrap();
    let traj = simulate_truth(
        &model,
        &PathConfig {
            t_end: 0.4,
            delta,
            substeps: 1,
            seed: 8,
            trial: 0,
            x0: InitialState::Fixed(vec![0.3, -0.2]),
            half_width: None,
            refined: false,
        },
    )
    .unwrap();
    let mut fc = FilterConfig::new(grid, 1e-7, delta, InitDensity::isotropic(vec![0.0, 0.0], 0.7));
    let on = run_filter(&fc, &ops, &traj).unwrap();
    fc.renormalize = false;
    let off = run_filter(&fc, &ops, &traj).unwrap();
    let scale = (on.final_state.log_normalizer - off.final_state.log_normalizer).exp();
    let a = on.final_state.density.scale(scale).to_dense().unwrap().into_data();
    let b = off.final_state.density.to_dense().unwrap().into_data();
    assert!(rel_dist(&a, &b) < 1e-5);
    for (x, y) in on.estimates.iter().zip(&off.estimates) {
        for k in 0..2 {
            assert!((x.mean[k] - y.mean[k]).abs() < 1e-5);
        }
    }
    assert_eq!(on.estimates.len(), traj.steps() + 1);
    assert_eq!(on.diagnostics.len(), traj.steps() + 1);
}

#[test]
fn tracks_kalman_bucy_on_linear_model() {
    let (a, g, r, c) = (-0.5, 0.5, 0.3, 1.0);
    let model = SignalModel::linear_1d(a, g, r, c);
    let delta = 0.005;
    let grid = Grid::new(4.0, 256, 1).unwrap();
    let ops = assemble_operators(&model, &grid, &AssemblyConfig::new(1e-12, delta)).unwrap();
    let traj = simulate_truth(
        &model,
        &PathConfig {
            t_end: 2.0,
            delta,
            substeps: 4,
            seed: 12,
            trial: 0,
            x0: InitialState::Fixed(vec![0.4]),
            half_width: None,
            refined: false,
        },
    )
    .unwrap();
    let fc = FilterConfig::new(grid, 1e-12, delta, InitDensity::isotropic(vec![0.5], 0.6));
    let run = run_filter(&fc, &ops, &traj).unwrap();
    let kb = kalman_bucy(a, g, r, c, 0.5, 0.36, &traj.dy, delta, 50);
    let worst = run
        .means()
        .iter()
        .zip(&kb)
        .map(|(m, (k, _))| (m[0] - k).abs())
        .fold(0.0, f64::max);
    // first order in δ on a posterior with std ≈ 0.3
    assert!(worst < 0.02, "max mean deviation {worst}");
    let rmse_tt = run.rmse(&traj).unwrap();
    let kb_means: Vec<Vec<f64>> = kb.iter().map(|(m, _)| vec![*m]).collect();
    let rmse_kb = dmz_tt::filter::rmse(&kb_means[1..], &traj.states[1..]).unwrap();
    assert!((rmse_tt - rmse_kb).abs() < 0.02);
}

#[test]
fn estimate_of_a_gaussian() {
    let grid = Grid::new(5.0, 101, 2).unwrap();
    let ops = assemble_operators(&SignalModel::smooth_2d(), &grid, &AssemblyConfig::new(1e-6, 0.1)).unwrap();
    let fc = FilterConfig::new(grid, 1e-6, 0.1, InitDensity::isotropic(vec![0.7, -1.1], 0.5));
    let state = init_filter(&fc, &ops).unwrap();
    let est = extract_estimate(&state.density, &grid).unwrap();
    assert!((est.mean[0] - 0.7).abs() < 1e-8 && (est.mean[1] + 1.1).abs() < 1e-8);
    for m in &est.marginals {
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.iter().all(|&p| p >= 0.0));
    }
    assert!(negativity(&state.density) > 0.0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    write_marginal_csv(&path, &est, &grid, 1).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let integral: f64 = rd.records().map(|r| r.unwrap()[1].parse::<f64>().unwrap()).sum::<f64>() * grid.dx();
    assert!((integral - 1.0).abs() < 1e-12);
    assert!(write_marginal_csv(&path, &est, &grid, 2).is_err());
    let other = Grid::new(5.0, 50, 2).unwrap();
    assert!(extract_estimate(&state.density, &other).is_err());
}

#[test]
fn configuration_errors() {
    let model = SignalModel::smooth_1d();
    let grid = Grid::new(3.0, 16, 1).unwrap();
    let mut ac = AssemblyConfig::new(1e-8, 0.05);
    ac.skip_lij = true;
    let ops = assemble_operators(&model, &grid, &ac).unwrap();
    let init = InitDensity::isotropic(vec![0.0], 1.0);
    let ok = FilterConfig::new(grid, 1e-8, 0.05, init.clone());
    assert!(init_filter(&ok, &ops).is_ok());
    let mut bad = ok.clone();
    bad.path = StepPath::Direct;
    assert!(init_filter(&bad, &ops).is_err());
    let bad = FilterConfig::new(grid, 1e-8, 0.1, init.clone());
    assert!(init_filter(&bad, &ops).is_err());
    let bad = FilterConfig::new(Grid::new(3.0, 17, 1).unwrap(), 1e-8, 0.05, init);
    assert!(init_filter(&bad, &ops).is_err());
    let bad = FilterConfig::new(grid, 1e-8, 0.05, InitDensity::isotropic(vec![0.0, 0.0], 1.0));
    assert!(init_filter(&bad, &ops).is_err());
    let bad = FilterConfig::new(grid, 1e-8, 0.05, InitDensity::Gaussian { mean: vec![0.0], std: vec![0.0] });
    assert!(init_filter(&bad, &ops).is_err());

    let traj = simulate_truth(
        &model,
        &PathConfig {
            t_end: 0.2,
            delta: 0.05,
            substeps: 2,
            seed: 1,
            trial: 0,
            x0: InitialState::Fixed(vec![0.0]),
            half_width: None,
            refined: false,
        },
    )
    .unwrap();
    let mut refined = ok.clone();
    refined.integral_mode = IntegralMode::Refined;
    assert!(run_filter(&refined, &ops, &traj).is_err());
    let state = init_filter(&ok, &ops).unwrap();
    assert!(milstein_step(&state, &[0.1, 0.2], &[0.0; 4], &ops, &ok).is_err());
}

#[test]
fn run_csv_layout() {
    let model = SignalModel::smooth_1d();
    let grid = Grid::new(3.0, 16, 1).unwrap();
    let ops = assemble_operators(&model, &grid, &AssemblyConfig::new(1e-8, 0.05)).unwrap();
    let traj = simulate_truth(
        &model,
        &PathConfig {
            t_end: 0.2,
            delta: 0.05,
            substeps: 1,
            seed: 1,
            trial: 0,
            x0: InitialState::Fixed(vec![0.0]),
            half_width: None,
            refined: false,
        },
    )
    .unwrap();
    let run = run_filter(&FilterConfig::new(grid, 1e-8, 0.05, InitDensity::Uniform), &ops, &traj).unwrap();
    assert!(run.max_rank() >= 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    run.write_csv(&path).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "mean_1", "mass", "max_rank", "neg_frac", "step_ms"]);
    assert_eq!(rd.records().count(), 5);
}
