//! Experiment configuration, result records, plot data and the CLI.

use std::fs;
use std::path::Path;
use std::process::Command;

use dmz_tt::harness::{emit_plot_data, run_experiment, ExperimentKind, ExperimentSpec, ResultRecord, ResultRow};

const TINY_CUBIC: &str = r#"
kind = "cubic"
seed = 4
trials = 2
output_dir = "unused"

[tracking]
dim = 2
half_width = 2.2
n = 8
t_end = 0.3
delta = 0.01
substeps = 2
eps_tt = 1e-3
advection = "upwind"
init_std = 0.5
pf_particles = [200]
ekf = true
"#;

const TINY_MULTIMODE: &str = r#"
kind = "multimode"
seed = 1
trials = 1

[tracking]
dim = 4
half_width = 4.5
n = 8
t_end = 0.1
delta = 0.01
substeps = 1
eps_tt = 1e-2
init_std = 1.0
pf_particles = [100]
snapshot_every = 5
"#;

const TEMPORAL: &str = r#"
kind = "temporal_order"
trials = 2

[convergence]
model = "smooth1"
half_width = 4.0
t_end = 1.0
levels = [0.1, 0.05, 0.025]
reference = 0.0125
init_std = 0.5
"#;

fn spec(text: &str) -> ExperimentSpec {
    ExperimentSpec::from_toml(text).unwrap()
}

fn without_timing(rows: &[ResultRow]) -> Vec<ResultRow> {
    rows.iter().cloned().map(|mut r| {
        r.wall_s = 0.0;
        r
    }).collect()
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(ExperimentSpec::from_toml(&format!("{TINY_CUBIC}\nbogus = 1\n")).is_err());
    let typo = TINY_CUBIC.replace("init_std", "init_sd");
    assert!(ExperimentSpec::from_toml(&typo).is_err());
    let round = spec(TINY_CUBIC).to_toml().unwrap();
    assert_eq!(spec(&round), spec(TINY_CUBIC));
}

#[test]
fn validation_rules() {
    assert!(spec(TINY_CUBIC).validate().is_ok());
    assert!(spec(&TINY_CUBIC.replace("t_end = 0.3", "t_end = 0.305")).validate().is_err());
    assert!(spec(&TINY_MULTIMODE.replace("dim = 4", "dim = 3")).validate().is_err());
    let big = spec(&TINY_CUBIC.replace("dim = 2", "dim = 9"));
    assert!(big.validate().is_err());
    let mut paper = big.clone();
    paper.apply_overrides(None, None, None, true);
    assert!(paper.validate().is_ok());
    assert!(spec(&TEMPORAL).validate().is_ok());
    assert!(spec(&TEMPORAL.replace("[0.1, 0.05, 0.025]", "[0.1, 0.05]")).validate().is_err());
    assert!(spec(&TEMPORAL.replace("[0.1, 0.05, 0.025]", "[0.1, 0.06, 0.025]")).validate().is_err());
    assert!(spec(&TEMPORAL.replace("temporal_order", "cubic")).validate().is_err());
    assert!(spec(&TINY_CUBIC.replace("pf_particles = [200]", "pf_particles = [0]")).validate().is_err());
}

#[test]
fn overrides() {
    let mut s = spec(TINY_CUBIC);
    s.apply_overrides(Some(99), None, Some("elsewhere".into()), true);
    assert_eq!((s.seed, s.trials, s.paper_scale), (99, 100, true));
    assert_eq!(s.output_dir, Path::new("elsewhere"));
    s.apply_overrides(None, Some(3), None, true);
    assert_eq!(s.trials, 3);
    let mut t = spec(TEMPORAL);
    t.apply_overrides(None, None, None, true);
    assert_eq!(t.trials, 2);
}

#[test]
fn zero_trials_give_an_empty_record() {
    let mut s = spec(TINY_CUBIC);
    s.trials = 0;
    let rec = run_experiment(&s).unwrap();
    assert!(rec.rows.is_empty());
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_plot_data(&rec, dir.path()).is_err());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn tracking_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(TINY_CUBIC);
    s.output_dir = dir.path().to_path_buf();
    s.tracking.as_mut().unwrap().plot_trials = vec![0, 1];
    let a = run_experiment(&s).unwrap();
    let b = run_experiment(&s).unwrap();
    assert_eq!(without_timing(&a.rows), without_timing(&b.rows));
    assert_eq!(a.rows.len(), 2 * 3);
    for m in ["tt", "pf200", "ekf"] {
        let sm = a.summary(m).unwrap();
        assert_eq!(sm.rows, 2);
        assert!(sm.mean_rmse.unwrap() > 0.0);
    }
    let mut other = s.clone();
    other.seed = 5;
    assert_ne!(without_timing(&run_experiment(&other).unwrap().rows), without_timing(&a.rows));

    a.write(dir.path()).unwrap();
    let back = ResultRecord::load(dir.path()).unwrap();
    assert_eq!(back.aggregate, a.aggregate);
    assert_eq!(back.rows.len(), a.rows.len());

    let files = emit_plot_data(&a, dir.path()).unwrap();
    let overlays: Vec<_> = files
        .iter()
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("overlay_"))
        .collect();
    assert_eq!(overlays.len(), 2 * 2);
    let mut rd = csv::Reader::from_path(dir.path().join("plots").join("overlay_trial1_dim2.csv")).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["t", "truth", "tt", "pf200", "ekf"]);
    assert_eq!(rd.records().count(), 31);

    // tampered aggregate no longer matches the rows
    let agg = dir.path().join("aggregate.json");
    let text = fs::read_to_string(&agg).unwrap();
    fs::write(&agg, text.replacen("\"ok\": 2", "\"ok\": 1", 1)).unwrap();
    assert!(ResultRecord::load(dir.path()).is_err());
}

#[test]
fn multimode_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(TINY_MULTIMODE);
    s.output_dir = dir.path().to_path_buf();
    let rec = run_experiment(&s).unwrap();
    assert_eq!(rec.kind, ExperimentKind::Multimode);
    let tt = rec.rows_for("tt").next().unwrap();
    assert!(tt.is_ok() && tt.asymmetry.is_some());
    emit_plot_data(&rec, dir.path()).unwrap();
    let path = dir.path().join("plots").join("heatmap_tt_dim1.csv");
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["x", "t", "density"]);
    // 8 cells at two snapshot times
    assert_eq!(rd.records().count(), 8 * 2);
    assert!(dir.path().join("plots").join("heatmap_pf100_dim4.csv").is_file());
}

#[test]
fn temporal_sweep_fits_both_modes() {
    let rec = run_experiment(&spec(TEMPORAL)).unwrap();
    for m in ["refined", "product"] {
        let fit = rec.fit(m).unwrap();
        assert_eq!(fit.points.len(), 3);
        assert!(fit.slope > 0.5, "{m} slope {}", fit.slope);
    }
}

fn cli(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_dmz-tt")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cubic.toml");
    fs::write(&cfg, TINY_CUBIC).unwrap();
    let out = dir.path().join("run");
    let (code, stdout) = cli(&["cubic", "--config", cfg.to_str().unwrap(), "--trials", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.contains("pf200"));
    assert!(out.join("results.csv").is_file() && out.join("plots").join("summary.json").is_file());
    assert_eq!(cli(&["plot", "--out", out.to_str().unwrap()]).0, 0);

    // wrong subcommand for the config kind
    assert_eq!(cli(&["multimode", "--config", cfg.to_str().unwrap()]).0, 2);
    // missing file
    assert_eq!(cli(&["cubic", "--config", dir.path().join("nope.toml").to_str().unwrap()]).0, 1);
    // Newton-Schulz cannot converge in two iterations
    let t1 = dir.path().join("t1.toml");
    fs::write(
        &t1,
        format!(
            "kind = \"table1\"\noutput_dir = \"{}\"\n[table1]\ndims = [2]\ndofs = [10]\ndelta = 0.1\neps_round = 1e-6\nmax_iter = 2\n",
            dir.path().join("t1").display()
        ),
    )
    .unwrap();
    assert_eq!(cli(&["table1", "--config", t1.to_str().unwrap()]).0, 3);
}
