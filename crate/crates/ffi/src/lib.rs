//! C ABI over `dmz-tt`.
//!
//! Every function returns a [`DmzStatus`]; on failure the message is kept per
//! thread and read back with [`dmz_last_error`]. Handles are opaque and must
//! be released with their `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dmz_tt::filter::{extract_estimate, init_filter, milstein_step, Estimate, FilterConfig, FilterState, InitDensity};
use dmz_tt::harness::{emit_plot_data, run_experiment, ExperimentSpec};
use dmz_tt::sde::iterated_integrals_product;
use dmz_tt::spatial::{assemble_operators, Advection, AssemblyConfig, DiscretizedOperators, Grid, SignalModel};
use dmz_tt::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmzStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Bad argument, shape or configuration.
    InvalidArgument = 2,
    /// Non-convergence, collapse or another numerical failure.
    Numerical = 3,
    Io = 4,
    /// A Rust panic was caught; the handle involved should be freed.
    Internal = 5,
}

/// Spatial discretization of the drift term.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmzAdvection {
    Central = 0,
    Upwind = 1,
    Fitted = 2,
}

fn advection(code: u32) -> Result<Advection, (DmzStatus, String)> {
    match code {
        c if c == DmzAdvection::Central as u32 => Ok(Advection::Central),
        c if c == DmzAdvection::Upwind as u32 => Ok(Advection::Upwind),
        c if c == DmzAdvection::Fitted as u32 => Ok(Advection::Fitted),
        c => Err(invalid(format!("unknown advection code {c}"))),
    }
}

/// Signal/observation model.
pub struct DmzModel {
    inner: SignalModel,
}

/// Grid filter: operators plus the current density.
pub struct DmzFilter {
    ops: DiscretizedOperators,
    cfg: FilterConfig,
    state: FilterState,
    estimate: Estimate,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DmzStatus {
    if e.is_numerical() {
        DmzStatus::Numerical
    } else if matches!(e, Error::Io { .. }) {
        DmzStatus::Io
    } else {
        DmzStatus::InvalidArgument
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (DmzStatus, String)>) -> DmzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DmzStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            DmzStatus::Internal
        }
    }
}

fn lib(e: Error) -> (DmzStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DmzStatus, String) {
    (DmzStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (DmzStatus, String) {
    (DmzStatus::InvalidArgument, msg.into())
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (DmzStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (DmzStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dmz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Cubic sensor of dimension `dim`: `h = x³` observations of a coupled sine drift.
///
/// # Safety
/// `out` must be a valid pointer to a `DmzModel*`.
#[no_mangle]
pub unsafe extern "C" fn dmz_model_cubic_sensor(dim: usize, out: *mut *mut DmzModel) -> DmzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        put(out, DmzModel { inner: SignalModel::cubic_sensor(dim) });
        Ok(())
    })
}

/// Four-dimensional bimodal model.
///
/// # Safety
/// `out` must be a valid pointer to a `DmzModel*`.
#[no_mangle]
pub unsafe extern "C" fn dmz_model_multimode(out: *mut *mut DmzModel) -> DmzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, DmzModel { inner: SignalModel::multimode() });
        Ok(())
    })
}

/// Scalar `dx = a x dt + g dv + r dw`, `dy = c x dt + dw`.
///
/// # Safety
/// `out` must be a valid pointer to a `DmzModel*`.
#[no_mangle]
pub unsafe extern "C" fn dmz_model_linear(a: f64, g: f64, r: f64, c: f64, out: *mut *mut DmzModel) -> DmzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, DmzModel { inner: SignalModel::linear_1d(a, g, r, c) });
        Ok(())
    })
}

/// # Safety
/// `model` must come from a `dmz_model_*` constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dmz_model_free(model: *mut DmzModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// State dimension of a model, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dmz_model_dim(model: *const DmzModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dim())
}

/// Assembles the operators on `[-half_width, half_width]^d` with `n` points
/// per direction and starts from `N(init_mean, diag(init_std²))`.
/// `advection_code` is a [`DmzAdvection`] value.
///
/// # Safety
/// `model` must be a live handle, `init_mean` and `init_std` must point to
/// `dmz_model_dim(model)` values, `out` to a `DmzFilter*`.
#[no_mangle]
pub unsafe extern "C" fn dmz_filter_new(
    model: *const DmzModel,
    half_width: f64,
    n: usize,
    delta: f64,
    eps_tt: f64,
    advection_code: u32,
    init_mean: *const f64,
    init_std: *const f64,
    out: *mut *mut DmzFilter,
) -> DmzStatus {
    guard(|| {
        let model = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = model.dim();
        let mean = slice(init_mean, d, "init_mean")?.to_vec();
        let std = slice(init_std, d, "init_std")?.to_vec();
        let grid = Grid::new(half_width, n, d).map_err(lib)?;
        let mut ac = AssemblyConfig::new(eps_tt, delta);
        ac.skip_lij = true;
        ac.advection = advection(advection_code)?;
        let ops = assemble_operators(model, &grid, &ac).map_err(lib)?;
        let mut cfg = FilterConfig::new(grid, eps_tt, delta, InitDensity::Gaussian { mean, std });
        cfg.neg_every = 0;
        let state = init_filter(&cfg, &ops).map_err(lib)?;
        let estimate = extract_estimate(&state.density, &grid).map_err(lib)?;
        put(out, DmzFilter { ops, cfg, state, estimate });
        Ok(())
    })
}

/// # Safety
/// `filter` must come from [`dmz_filter_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dmz_filter_free(filter: *mut DmzFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Advances by one step given the observation increment `dy` (length `d`).
/// On failure the filter keeps its previous state.
///
/// # Safety
/// `filter` must be a live handle and `dy` must point to `len` values.
#[no_mangle]
pub unsafe extern "C" fn dmz_filter_step(filter: *mut DmzFilter, dy: *const f64, len: usize) -> DmzStatus {
    guard(|| {
        let f = filter.as_mut().ok_or_else(|| null("filter"))?;
        let d = f.ops.dim();
        if len != d {
            return Err(invalid(format!("increment has {len} entries, model needs {d}")));
        }
        let dy = slice(dy, len, "dy")?;
        let iterated = iterated_integrals_product(dy, f.cfg.delta);
        let next = milstein_step(&f.state, dy, &iterated, &f.ops, &f.cfg).map_err(lib)?;
        let est = extract_estimate(&next.density, &f.cfg.grid).map_err(lib)?;
        f.state = next;
        f.estimate = est;
        Ok(())
    })
}

/// Writes the posterior mean into `out` (length `d`).
///
/// # Safety
/// `filter` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn dmz_filter_mean(filter: *const DmzFilter, out: *mut f64, len: usize) -> DmzStatus {
    guard(|| {
        let f = filter.as_ref().ok_or_else(|| null("filter"))?;
        let mean = &f.estimate.mean;
        if len != mean.len() {
            return Err(invalid(format!("buffer holds {len} values, mean has {}", mean.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(mean.as_ptr(), out, len);
        Ok(())
    })
}

/// Writes the probability mass per cell of direction `k` into `out` (length `n`).
///
/// # Safety
/// `filter` must be a live handle and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn dmz_filter_marginal(filter: *const DmzFilter, k: usize, out: *mut f64, len: usize) -> DmzStatus {
    guard(|| {
        let f = filter.as_ref().ok_or_else(|| null("filter"))?;
        let m = f.estimate.marginals.get(k).ok_or_else(|| invalid(format!("no direction {k}")))?;
        if len != m.len() {
            return Err(invalid(format!("buffer holds {len} values, marginal has {}", m.len())));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        ptr::copy_nonoverlapping(m.as_ptr(), out, len);
        Ok(())
    })
}

/// Largest TT-rank of the current density, 0 for a null handle.
///
/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dmz_filter_max_rank(filter: *const DmzFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.state.density.max_rank())
}

/// Steps taken so far, 0 for a null handle.
///
/// # Safety
/// `filter` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dmz_filter_steps(filter: *const DmzFilter) -> usize {
    filter.as_ref().map_or(0, |f| f.state.step)
}

/// Runs the experiment described by a TOML file and writes results (and plot
/// tables) under `out_dir`, or under the file's `output_dir` if `out_dir` is null.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out_dir` null or one.
#[no_mangle]
pub unsafe extern "C" fn dmz_run_experiment(config_path: *const c_char, out_dir: *const c_char) -> DmzStatus {
    guard(|| {
        let path = path_arg(config_path, "config_path")?;
        let out = if out_dir.is_null() { None } else { Some(path_arg(out_dir, "out_dir")?) };
        let mut spec = ExperimentSpec::load(&path).map_err(lib)?;
        spec.apply_overrides(None, None, out, false);
        spec.validate().map_err(lib)?;
        let record = run_experiment(&spec).map_err(lib)?;
        record.write(&spec.output_dir).map_err(lib)?;
        if !record.rows.is_empty() {
            emit_plot_data(&record, &spec.output_dir).map_err(lib)?;
        }
        Ok(())
    })
}
