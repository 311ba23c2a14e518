//! Per-trial result rows plus an aggregate that is recomputed and checked
//! whenever a record is loaded.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::spec::ExperimentKind;

pub const RESULTS_CSV: &str = "results.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    /// Numerical failure of the method (collapse, degeneracy, rank cap).
    Failed,
    /// EKF divergence flag.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub trial: u64,
    pub seed: u64,
    pub dim: usize,
    pub n: usize,
    /// Swept or fixed parameter: `δ` for tracking and the rank study, the level value
    /// (`Δx`, `δ` or `eps_tt`) for convergence studies.
    pub param: f64,
    pub status: RowStatus,
    pub rmse: Option<f64>,
    /// Convergence error against the reference.
    pub error: Option<f64>,
    pub rank: Option<usize>,
    pub iterations: Option<usize>,
    /// Worst marginal reflection asymmetry over snapshots and directions.
    pub asymmetry: Option<f64>,
    /// Smallest per-direction share of bimodal snapshots.
    pub bimodal_fraction: Option<f64>,
    pub wall_s: f64,
    pub message: String,
}

impl ResultRow {
    pub fn new(method: impl Into<String>, trial: u64, seed: u64, dim: usize, n: usize, param: f64) -> Self {
        Self {
            method: method.into(),
            trial,
            seed,
            dim,
            n,
            param,
            status: RowStatus::Ok,
            rmse: None,
            error: None,
            rank: None,
            iterations: None,
            asymmetry: None,
            bimodal_fraction: None,
            wall_s: 0.0,
            message: String::new(),
        }
    }

    pub fn failed(mut self, status: RowStatus, message: impl Into<String>) -> Self {
        self.status = status;
        self.message = message.into();
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub rows: usize,
    pub ok: usize,
    pub failed: usize,
    pub diverged: usize,
    /// Means over successful rows.
    pub mean_rmse: Option<f64>,
    pub mean_wall_s: Option<f64>,
    pub max_rank: Option<usize>,
    pub max_asymmetry: Option<f64>,
    pub min_bimodal_fraction: Option<f64>,
}

/// Log-log least-squares fit of the per-level error against the swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub method: String,
    pub slope: f64,
    pub intercept: f64,
    /// `(param, error)` with the error averaged over paths.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub rows: usize,
    pub methods: Vec<MethodSummary>,
    pub fits: Vec<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    pub aggregate: Aggregate,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn rms(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt())
}

/// Least-squares slope and intercept of `ln y` against `ln x`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| {
        let slope = sxy / sxx;
        (slope, my - slope * mx)
    })
}

/// Methods in order of first appearance.
fn method_order(rows: &[ResultRow]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in rows {
        if !out.contains(&r.method) {
            out.push(r.method.clone());
        }
    }
    out
}

pub fn aggregate(kind: ExperimentKind, seed: u64, rows: &[ResultRow]) -> Aggregate {
    let mut methods = Vec::new();
    let mut fits = Vec::new();
    for m in method_order(rows) {
        let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.method == m).collect();
        let ok: Vec<&&ResultRow> = mine.iter().filter(|r| r.is_ok()).collect();
        let count = |s: RowStatus| mine.iter().filter(|r| r.status == s).count();
        let collect = |f: &dyn Fn(&ResultRow) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
        methods.push(MethodSummary {
            method: m.clone(),
            rows: mine.len(),
            ok: ok.len(),
            failed: count(RowStatus::Failed),
            diverged: count(RowStatus::Diverged),
            mean_rmse: mean(&collect(&|r| r.rmse)),
            mean_wall_s: mean(&collect(&|r| Some(r.wall_s))),
            max_rank: ok.iter().filter_map(|r| r.rank).max(),
            max_asymmetry: collect(&|r| r.asymmetry).into_iter().reduce(f64::max),
            min_bimodal_fraction: collect(&|r| r.bimodal_fraction).into_iter().reduce(f64::min),
        });
        if kind.is_convergence() {
            let mut params: Vec<f64> = Vec::new();
            for r in &ok {
                if !params.contains(&r.param) {
                    params.push(r.param);
                }
            }
            let points: Vec<(f64, f64)> = params
                .iter()
                .filter_map(|&p| {
                    let errs: Vec<f64> = ok.iter().filter(|r| r.param == p).filter_map(|r| r.error).collect();
                    // strong error for the time sweep, path average otherwise
                    let e = if kind == ExperimentKind::TemporalOrder { rms(&errs) } else { mean(&errs) };
                    e.map(|e| (p, e))
                })
                .collect();
            if let Some((slope, intercept)) = loglog_fit(&points) {
                fits.push(SlopeFit {
                    method: m.clone(),
                    slope,
                    intercept,
                    points,
                });
            }
        }
    }
    Aggregate {
        kind,
        seed,
        rows: rows.len(),
        methods,
        fits,
    }
}

impl ResultRecord {
    /// Sorts rows by trial, then method (first appearance), then aggregates.
    pub fn new(kind: ExperimentKind, seed: u64, mut rows: Vec<ResultRow>) -> Self {
        let order = method_order(&rows);
        rows.sort_by(|a, b| {
            let ia = order.iter().position(|m| *m == a.method);
            let ib = order.iter().position(|m| *m == b.method);
            a.trial
                .cmp(&b.trial)
                .then(ia.cmp(&ib))
                .then(a.dim.cmp(&b.dim))
                .then(a.n.cmp(&b.n))
                .then(a.param.total_cmp(&b.param))
        });
        let aggregate = aggregate(kind, seed, &rows);
        Self {
            kind,
            seed,
            rows,
            aggregate,
        }
    }

    pub fn summary(&self, method: &str) -> Option<&MethodSummary> {
        self.aggregate.methods.iter().find(|m| m.method == method)
    }

    pub fn fit(&self, method: &str) -> Option<&SlopeFit> {
        self.aggregate.fits.iter().find(|f| f.method == method)
    }

    pub fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RESULTS_CSV);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let path = dir.join(AGGREGATE_JSON);
        let text = serde_json::to_string_pretty(&self.aggregate).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Reads a record back and checks the stored aggregate against the rows.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(AGGREGATE_JSON);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let stored: Aggregate =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let path = dir.join(RESULTS_CSV);
        let mut rd = csv::Reader::from_path(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let rows = rd
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let recomputed = aggregate(stored.kind, stored.seed, &rows);
        if recomputed != stored {
            return Err(Error::Format(format!(
                "{} does not match the rows in {}",
                AGGREGATE_JSON, RESULTS_CSV
            )));
        }
        Ok(Self {
            kind: stored.kind,
            seed: stored.seed,
            rows,
            aggregate: stored,
        })
    }
}
