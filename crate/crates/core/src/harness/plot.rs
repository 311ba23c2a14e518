//! Plot-ready tables derived from a result record and its raw trial files.
//! Everything is built in memory first so a failure leaves no partial output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::record::ResultRecord;
use crate::harness::spec::ExperimentKind;
use crate::harness::table1::published_rank;
use crate::harness::tracking::{raw_path, RAW_DIR};

pub const PLOT_DIR: &str = "plots";

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn read_table(path: &Path) -> Result<Table> {
    let fmt = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(fmt)?;
    let headers = rd.headers().map_err(fmt)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(fmt)?;
        let row = rec
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("{}: {v}: {e}", path.display()))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

fn csv_text(headers: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = headers.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn methods(record: &ResultRecord) -> Vec<String> {
    record.aggregate.methods.iter().map(|m| m.method.clone()).collect()
}

/// `overlay_trial{t}_dim{k}.csv`: time, truth and each method's mean.
fn overlays(record: &ResultRecord, out: &Path, files: &mut Vec<(PathBuf, String)>) -> Result<()> {
    let trials: Vec<u64> = {
        let mut t: Vec<u64> = record.rows.iter().map(|r| r.trial).collect();
        t.sort_unstable();
        t.dedup();
        t.into_iter().filter(|&t| raw_path(out, t, "truth").exists()).collect()
    };
    for trial in trials {
        let truth = read_table(&raw_path(out, trial, "truth"))?;
        let dim = truth.headers.iter().filter(|h| h.starts_with("x_")).count();
        let est: Vec<(String, Table)> = methods(record)
            .into_iter()
            .filter_map(|m| {
                let p = raw_path(out, trial, &m);
                p.exists().then(|| read_table(&p).map(|t| (m, t)))
            })
            .collect::<Result<_>>()?;
        let times = truth.column("t").unwrap_or_default();
        for k in 1..=dim {
            let mut headers = vec!["t".to_string(), "truth".to_string()];
            let mut cols = vec![times.clone(), truth.column(&format!("x_{k}")).unwrap_or_default()];
            for (m, t) in &est {
                let col = t
                    .column(&format!("mean_{k}"))
                    .ok_or_else(|| Error::Format(format!("trial {trial} {m}: no mean_{k} column")))?;
                if col.len() != times.len() {
                    return Err(Error::Format(format!("trial {trial} {m}: length differs from the truth")));
                }
                headers.push(m.clone());
                cols.push(col);
            }
            let rows = (0..times.len()).map(|i| cols.iter().map(|c| c[i]).collect());
            files.push((PathBuf::from(format!("overlay_trial{trial}_dim{k}.csv")), csv_text(&headers, rows)));
        }
    }
    Ok(())
}

/// `heatmap_{method}_dim{k}.csv` with `x, t, density` for the first plotted trial.
fn heatmaps(record: &ResultRecord, out: &Path, files: &mut Vec<(PathBuf, String)>) -> Result<()> {
    let Some(trial) = record
        .rows
        .iter()
        .map(|r| r.trial)
        .find(|&t| raw_path(out, t, "truth").exists())
    else {
        return Ok(());
    };
    for m in methods(record) {
        let p = raw_path(out, trial, &format!("{m}_marginals"));
        if !p.exists() {
            continue;
        }
        let tab = read_table(&p)?;
        let mut by_dim: BTreeMap<i64, Vec<Vec<f64>>> = BTreeMap::new();
        for r in &tab.rows {
            // columns: t, dim, x, density
            by_dim.entry(r[1] as i64).or_default().push(vec![r[2], r[0], r[3]]);
        }
        let headers = ["x", "t", "density"].map(String::from);
        for (k, rows) in by_dim {
            files.push((PathBuf::from(format!("heatmap_{m}_dim{k}.csv")), csv_text(&headers, rows)));
        }
    }
    Ok(())
}

fn convergence(record: &ResultRecord) -> (PathBuf, String) {
    let mut s = String::from("method,param,error,fit,slope\n");
    for f in &record.aggregate.fits {
        for &(p, e) in &f.points {
            let fit = (f.intercept + f.slope * p.ln()).exp();
            let _ = writeln!(s, "{},{p},{e},{fit},{}", f.method, f.slope);
        }
    }
    (PathBuf::from("convergence.csv"), s)
}

fn table1(record: &ResultRecord) -> (PathBuf, String) {
    let mut s = String::from("d,n,rank,published_rank,iterations,residual\n");
    for r in &record.rows {
        let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.dim,
            r.n,
            opt(r.rank),
            opt(published_rank(r.dim, r.n)),
            opt(r.iterations),
            r.error.map_or(String::new(), |e| e.to_string())
        );
    }
    (PathBuf::from("table1.csv"), s)
}

/// Writes plot tables under `out/plots`, reading raw trial files from `out/raw`.
/// Returns the paths written.
pub fn emit_plot_data(record: &ResultRecord, out: &Path) -> Result<Vec<PathBuf>> {
    if record.rows.is_empty() {
        return Err(Error::InvalidArgument("no result rows to plot".into()));
    }
    let summary = serde_json::to_string_pretty(&record.aggregate).map_err(|e| Error::Format(e.to_string()))?;
    let mut files = vec![(PathBuf::from("summary.json"), summary + "\n")];
    match record.kind {
        ExperimentKind::Table1 => files.push(table1(record)),
        k if k.is_convergence() => files.push(convergence(record)),
        k => {
            if out.join(RAW_DIR).is_dir() {
                overlays(record, out, &mut files)?;
                if k == ExperimentKind::Multimode {
                    heatmaps(record, out, &mut files)?;
                }
            }
        }
    }
    let dir = out.join(PLOT_DIR);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    files
        .into_iter()
        .map(|(name, text)| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}
