//! On-disk cache of the offline stage: one binary TT file per operator plus
//! a JSON manifest. A cache hit requires the manifest to match exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::assemble::{assemble_operators, AssemblyConfig, DiscretizedOperators};
use crate::spatial::grid::Grid;
use crate::spatial::model::SignalModel;
use crate::tt::io::{load_matrix, save_matrix};

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheManifest {
    pub grid: Grid,
    pub model_hash: String,
    pub eps: f64,
    pub delta: f64,
    pub config: AssemblyConfig,
    pub dim: usize,
    pub ns_residuals: Vec<f64>,
}

impl CacheManifest {
    fn key_matches(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.model_hash == other.model_hash
            && self.eps == other.eps
            && self.delta == other.delta
            && self.config == other.config
    }
}

fn manifest_for(model: &SignalModel, grid: &Grid, cfg: &AssemblyConfig) -> CacheManifest {
    CacheManifest {
        grid: *grid,
        model_hash: model.hash(),
        eps: cfg.eps,
        delta: cfg.delta,
        config: *cfg,
        dim: grid.d,
        ns_residuals: Vec::new(),
    }
}

pub fn save_operators(dir: &Path, model: &SignalModel, cfg: &AssemblyConfig, ops: &DiscretizedOperators) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let named = [
        ("delta_g", &ops.delta_g),
        ("delta_rho", &ops.delta_rho),
        ("c_d", &ops.c_d),
        ("m0", &ops.m0),
        ("m_mix", &ops.m_mix),
        ("l0", &ops.l0),
        ("m_l", &ops.m_l),
        ("m_r", &ops.m_r),
        ("m_r_product", &ops.m_r_product),
    ];
    for (name, m) in named {
        save_matrix(&dir.join(format!("{name}.tt")), m)?;
    }
    for (k, m) in ops.lk.iter().enumerate() {
        save_matrix(&dir.join(format!("l_{k}.tt")), m)?;
    }
    for (idx, m) in ops.lij.iter().enumerate() {
        save_matrix(&dir.join(format!("lij_{idx}.tt")), m)?;
    }
    let mut manifest = manifest_for(model, &ops.grid, cfg);
    manifest.ns_residuals = ops.ns_residuals.clone();
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Loads cached operators if the manifest matches, otherwise `Ok(None)`.
pub fn load_operators(dir: &Path, model: &SignalModel, grid: &Grid, cfg: &AssemblyConfig) -> Result<Option<DiscretizedOperators>> {
    let path = dir.join(MANIFEST);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(None);
    };
    let Ok(stored) = serde_json::from_str::<CacheManifest>(&text) else {
        return Ok(None);
    };
    if !stored.key_matches(&manifest_for(model, grid, cfg)) {
        return Ok(None);
    }
    let get = |name: &str| load_matrix(&dir.join(format!("{name}.tt")));
    let d = grid.d;
    let lk = (0..d).map(|k| get(&format!("l_{k}"))).collect::<Result<Vec<_>>>()?;
    let lij = if cfg.skip_lij {
        Vec::new()
    } else {
        (0..d * d).map(|i| get(&format!("lij_{i}"))).collect::<Result<Vec<_>>>()?
    };
    Ok(Some(DiscretizedOperators {
        grid: *grid,
        eps: cfg.eps,
        delta: cfg.delta,
        mixed: cfg.mixed,
        delta_g: get("delta_g")?,
        delta_rho: get("delta_rho")?,
        c_d: get("c_d")?,
        m0: get("m0")?,
        m_mix: get("m_mix")?,
        l0: get("l0")?,
        lk,
        lij,
        m_l: get("m_l")?,
        m_r: get("m_r")?,
        m_r_product: get("m_r_product")?,
        ns_residuals: stored.ns_residuals,
    }))
}

/// Loads from `dir` when the manifest matches, otherwise assembles and stores.
pub fn assemble_cached(dir: &Path, model: &SignalModel, grid: &Grid, cfg: &AssemblyConfig) -> Result<DiscretizedOperators> {
    if let Some(ops) = load_operators(dir, model, grid, cfg)? {
        return Ok(ops);
    }
    let ops = assemble_operators(model, grid, cfg)?;
    save_operators(dir, model, cfg, &ops)?;
    Ok(ops)
}
