use std::time::Instant;

use crate::error::Result;
use crate::harness::record::{ResultRecord, ResultRow};
use crate::harness::spec::{ExperimentKind, ExperimentSpec};
use crate::spatial::{assemble::implicit_matrix, Grid, SignalModel};
use crate::tt::{newton_schulz_inverse, NewtonSchulzConfig};

/// Published maximal TT-ranks of the inverse, as `(d, DOF, rank)`.
pub const PUBLISHED_RANKS: [(usize, usize, usize); 16] = [
    (2, 10, 5),
    (4, 10, 6),
    (6, 10, 6),
    (8, 10, 6),
    (2, 20, 7),
    (4, 20, 8),
    (6, 20, 9),
    (8, 20, 9),
    (2, 40, 10),
    (4, 40, 10),
    (6, 40, 10),
    (8, 40, 10),
    (2, 60, 12),
    (4, 60, 13),
    (6, 60, 13),
    (8, 60, 14),
];

pub fn published_rank(d: usize, n: usize) -> Option<usize> {
    PUBLISHED_RANKS.iter().find(|(a, b, _)| *a == d && *b == n).map(|r| r.2)
}

/// Newton-Schulz inversion of `I − (δ/2)(Δ_G + Δ_ρ)` for the rank-study
/// operator on every `(d, DOF)` pair; rows carry the inverse's max TT-rank.
pub fn run_table1(spec: &ExperimentSpec) -> Result<ResultRecord> {
    spec.validate()?;
    let cfg = spec.table1.as_ref().expect("validated");
    let ns = NewtonSchulzConfig {
        tol: cfg.tol,
        eps_round: cfg.eps_round,
        max_iter: cfg.max_iter,
        rank_cap: cfg.rank_cap,
        ..NewtonSchulzConfig::default()
    };
    let mut rows = Vec::new();
    for &d in &cfg.dims {
        let model = SignalModel::rank_study(d);
        for &n in &cfg.dofs {
            let t = Instant::now();
            let grid = Grid::new(cfg.half_width, n, d)?;
            let a = implicit_matrix(&model, &grid, cfg.delta)?;
            let rep = newton_schulz_inverse(&a, &ns)?;
            let mut row = ResultRow::new("ns", 0, spec.seed, d, n, cfg.delta);
            row.rank = Some(rep.inverse.max_rank());
            row.iterations = Some(rep.iterations());
            row.error = Some(rep.final_residual());
            row.wall_s = t.elapsed().as_secs_f64();
            log::info!("table1 d={d} N={n}: rank {} after {} iterations", rep.inverse.max_rank(), rep.iterations());
            rows.push(row);
        }
    }
    Ok(ResultRecord::new(ExperimentKind::Table1, spec.seed, rows))
}
