//! The exported functions, called the way a C program would.

use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use dmz_tt_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(dmz_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn filter_lifecycle() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(dmz_model_linear(-0.5, 0.5, 0.3, 1.0, &mut model), DmzStatus::Ok);
        assert_eq!(dmz_model_dim(model), 1);
        let mut filter = ptr::null_mut();
        let (mean, std) = ([0.5], [0.6]);
        let st = dmz_filter_new(model, 4.0, 64, 0.01, 1e-10, DmzAdvection::Central as u32, mean.as_ptr(), std.as_ptr(), &mut filter);
        assert_eq!(st, DmzStatus::Ok, "{}", last_error());
        assert!(last_error().is_empty());
        let mut m = [0.0];
        assert_eq!(dmz_filter_mean(filter, m.as_mut_ptr(), 1), DmzStatus::Ok);
        assert!((m[0] - 0.5).abs() < 1e-6);
        // positive increments pull the mean of an h = x sensor upward
        for _ in 0..20 {
            assert_eq!(dmz_filter_step(filter, [0.05].as_ptr(), 1), DmzStatus::Ok);
        }
        assert_eq!(dmz_filter_steps(filter), 20);
        assert_eq!(dmz_filter_max_rank(filter), 1);
        let mut m2 = [0.0];
        dmz_filter_mean(filter, m2.as_mut_ptr(), 1);
        assert!(m2[0] > m[0]);
        let mut marg = vec![0.0; 64];
        assert_eq!(dmz_filter_marginal(filter, 0, marg.as_mut_ptr(), 64), DmzStatus::Ok);
        assert!((marg.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        // errors leave the state alone and set the message
        assert_eq!(dmz_filter_step(filter, [0.1, 0.1].as_ptr(), 2), DmzStatus::InvalidArgument);
        assert!(last_error().contains("increment"));
        assert_eq!(dmz_filter_steps(filter), 20);
        assert_eq!(dmz_filter_marginal(filter, 1, marg.as_mut_ptr(), 64), DmzStatus::InvalidArgument);
        assert_eq!(dmz_filter_mean(filter, m.as_mut_ptr(), 2), DmzStatus::InvalidArgument);
        assert_eq!(dmz_filter_step(ptr::null_mut(), [0.1].as_ptr(), 1), DmzStatus::NullPointer);
        assert_eq!(dmz_filter_step(filter, ptr::null(), 1), DmzStatus::NullPointer);

        dmz_filter_free(filter);
        dmz_model_free(model);
        dmz_filter_free(ptr::null_mut());
        dmz_model_free(ptr::null_mut());
    }
}

#[test]
fn constructor_errors() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(dmz_model_cubic_sensor(0, &mut model), DmzStatus::InvalidArgument);
        assert!(model.is_null());
        assert_eq!(dmz_model_cubic_sensor(2, ptr::null_mut()), DmzStatus::NullPointer);
        assert_eq!(dmz_model_cubic_sensor(2, &mut model), DmzStatus::Ok);
        let mut filter = ptr::null_mut();
        let v = [0.0, 0.0];
        assert_eq!(dmz_filter_new(model, 2.0, 8, 0.01, 1e-3, 7, v.as_ptr(), v.as_ptr(), &mut filter), DmzStatus::InvalidArgument);
        assert!(last_error().contains("advection"));
        assert_eq!(dmz_filter_new(model, 2.0, 1, 0.01, 1e-3, 1, v.as_ptr(), v.as_ptr(), &mut filter), DmzStatus::InvalidArgument);
        // zero prior std
        assert_eq!(dmz_filter_new(model, 2.0, 8, 0.01, 1e-3, 1, v.as_ptr(), v.as_ptr(), &mut filter), DmzStatus::InvalidArgument);
        assert_eq!(dmz_filter_new(model, 2.0, 8, 0.01, 1e-3, 1, ptr::null(), v.as_ptr(), &mut filter), DmzStatus::NullPointer);
        assert!(filter.is_null());
        assert_eq!(dmz_model_dim(ptr::null()), 0);
        dmz_model_free(model);

        let mut mm = ptr::null_mut();
        assert_eq!(dmz_model_multimode(&mut mm), DmzStatus::Ok);
        assert_eq!(dmz_model_dim(mm), 4);
        dmz_model_free(mm);
    }
}

#[test]
fn experiment_entry_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.toml");
    std::fs::write(
        &cfg,
        "kind = \"table1\"\n[table1]\ndims = [2]\ndofs = [10]\ndelta = 0.1\neps_round = 1e-6\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let c_cfg = CString::new(cfg.to_str().unwrap()).unwrap();
    let c_out = CString::new(out.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(dmz_run_experiment(c_cfg.as_ptr(), c_out.as_ptr()), DmzStatus::Ok, "{}", last_error());
        assert!(out.join("results.csv").is_file());
        let missing = CString::new(dir.path().join("none.toml").to_str().unwrap()).unwrap();
        assert_eq!(dmz_run_experiment(missing.as_ptr(), c_out.as_ptr()), DmzStatus::Io);
        assert!(!last_error().is_empty());
        assert_eq!(dmz_run_experiment(ptr::null(), ptr::null()), DmzStatus::NullPointer);
    }
    std::fs::write(&cfg, "kind = \"table1\"\n[table1]\ndims = [2]\ndofs = [10]\ndelta = 0.1\neps_round = 1e-6\nmax_iter = 2\n").unwrap();
    unsafe {
        assert_eq!(dmz_run_experiment(c_cfg.as_ptr(), c_out.as_ptr()), DmzStatus::Numerical);
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dmz_tt.h")).unwrap();
    for sym in [
        "dmz_last_error",
        "dmz_model_cubic_sensor",
        "dmz_model_multimode",
        "dmz_model_linear",
        "dmz_model_free",
        "dmz_filter_new",
        "dmz_filter_step",
        "dmz_filter_mean",
        "dmz_filter_marginal",
        "dmz_filter_free",
        "dmz_run_experiment",
        "DMZ_STATUS_NUMERICAL",
        "typedef struct DmzFilter DmzFilter",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
    // syntax-check as C when a compiler is around
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-std=c99", "-Wall", "-Werror", "-x", "c"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include/dmz_tt.h"))
        .output()
    else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
