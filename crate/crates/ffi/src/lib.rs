//! C ABI over `mpw-core`.
//!
//! Every function returns an [`MpwStatus`]; on failure the message is
//! available from [`mpw_last_error_message`] on the same thread. Sweeps live
//! behind the opaque [`MpwSweep`] handle, released with [`mpw_sweep_free`].
//! Panics never cross the boundary; they surface as `MPW_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mpw_core::eigensolver::{SolveOptions, SolverPath};
use mpw_core::model::{ParamName, SystemParams};
use mpw_core::sweep::{self, Axis, SweepRow, SweepSpec};
use mpw_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpwStatus {
    Ok = 0,
    InvalidArgument = 1,
    NotConverged = 2,
    Integrity = 3,
    Resource = 4,
    Io = 5,
    NullPointer = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpwSolver {
    Column = 0,
    Full = 1,
    Collective = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpwParams {
    pub n_f: u32,
    pub n_b: u32,
    pub eps_f: f64,
    pub eps_b: f64,
    pub v_f: f64,
    pub v_b: f64,
    pub mu: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpwOptions {
    pub solver: MpwSolver,
    pub tolerance: f64,
    pub max_iterations: u32,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MpwWitness {
    pub energy: f64,
    pub lambda_g_f: f64,
    pub lambda_g_b: f64,
    pub bound_f: f64,
    pub bound_b: f64,
    pub residual: f64,
    pub iterations: u64,
    pub parity: i8,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MpwSweepRow {
    pub n_f: u32,
    pub n_b: u32,
    pub eps_f: f64,
    pub eps_b: f64,
    pub v_f: f64,
    pub v_b: f64,
    pub mu: f64,
    pub energy: f64,
    pub lambda_g_f: f64,
    pub lambda_g_b: f64,
    pub bound_f: f64,
    pub bound_b: f64,
    pub iterations: u64,
    pub wall_time_ms: u64,
    pub converged: bool,
}

/// Opaque sweep under construction or completed.
pub struct MpwSweep {
    base: SystemParams,
    options: SolveOptions,
    axes: Vec<Axis>,
    rows: Vec<SweepRow>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> MpwStatus {
    match e {
        Error::Parameter(_) | Error::Config(_) | Error::Normalization { .. } => MpwStatus::InvalidArgument,
        Error::Integrity(_) => MpwStatus::Integrity,
        Error::Resource(_) => MpwStatus::Resource,
        Error::Io { .. } => MpwStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<MpwStatus, (MpwStatus, String)>) -> MpwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => {
            if status == MpwStatus::Ok {
                set_error("");
            }
            status
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            MpwStatus::Panic
        }
    }
}

fn fail(e: Error) -> (MpwStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (MpwStatus, String) {
    (MpwStatus::NullPointer, format!("{what} is null"))
}

fn to_params(p: &MpwParams) -> SystemParams {
    SystemParams {
        n_f: p.n_f as usize,
        n_b: p.n_b as usize,
        eps_f: p.eps_f,
        eps_b: p.eps_b,
        v_f: p.v_f,
        v_b: p.v_b,
        mu: p.mu,
    }
}

/// `options` may be null for defaults.
unsafe fn to_options(options: *const MpwOptions) -> SolveOptions {
    let mut o = SolveOptions::default();
    if let Some(opt) = options.as_ref() {
        o.path = match opt.solver {
            MpwSolver::Column => SolverPath::Column,
            MpwSolver::Full => SolverPath::Full,
            MpwSolver::Collective => SolverPath::Collective,
        };
        o.tolerance = opt.tolerance;
        o.max_iterations = opt.max_iterations as usize;
        o.seed = opt.seed;
    }
    o
}

fn row_to_c(r: &SweepRow) -> MpwSweepRow {
    MpwSweepRow {
        n_f: r.n_f as u32,
        n_b: r.n_b as u32,
        eps_f: r.eps_f,
        eps_b: r.eps_b,
        v_f: r.v_f,
        v_b: r.v_b,
        mu: r.mu,
        energy: r.energy,
        lambda_g_f: r.lambda_g_f,
        lambda_g_b: r.lambda_g_b,
        bound_f: r.bound_f,
        bound_b: r.bound_b,
        iterations: r.iterations as u64,
        wall_time_ms: r.wall_time_ms,
        converged: r.converged,
    }
}

unsafe fn c_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, (MpwStatus, String)> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| (MpwStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// NUL-terminated library version; static storage.
#[no_mangle]
pub extern "C" fn mpw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread ("" after a success).
/// Valid until the next `mpw_*` call on the same thread.
#[no_mangle]
pub extern "C" fn mpw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mpw_default_params(out: *mut MpwParams) -> MpwStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = SystemParams::default();
        *out = MpwParams {
            n_f: p.n_f as u32,
            n_b: p.n_b as u32,
            eps_f: p.eps_f,
            eps_b: p.eps_b,
            v_f: p.v_f,
            v_b: p.v_b,
            mu: p.mu,
        };
        Ok(MpwStatus::Ok)
    })
}

/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mpw_default_options(out: *mut MpwOptions) -> MpwStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let o = SolveOptions::default();
        *out = MpwOptions {
            solver: MpwSolver::Column,
            tolerance: o.tolerance,
            max_iterations: o.max_iterations as u32,
            seed: o.seed,
        };
        Ok(MpwStatus::Ok)
    })
}

/// `N (r - N) / r`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mpw_theoretical_bound(n: u32, r: u32, out: *mut f64) -> MpwStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = mpw_core::theoretical_bound(n as usize, r as usize).map_err(fail)?;
        Ok(MpwStatus::Ok)
    })
}

/// Solve and fill `out`. Returns `MPW_STATUS_NOT_CONVERGED` with `out`
/// filled when the eigensolver stopped early.
///
/// # Safety
/// `params` and `out` must be valid pointers; `options` may be null.
#[no_mangle]
pub unsafe extern "C" fn mpw_compute_witness(
    params: *const MpwParams,
    options: *const MpwOptions,
    out: *mut MpwWitness,
) -> MpwStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let w = mpw_core::compute_witness(&to_params(p), &to_options(options)).map_err(fail)?;
        *out = MpwWitness {
            energy: w.energy,
            lambda_g_f: w.lambda_g_f(),
            lambda_g_b: w.lambda_g_b(),
            bound_f: w.bound_f(),
            bound_b: w.bound_b(),
            residual: w.diagnostics.residual,
            iterations: w.diagnostics.iterations as u64,
            parity: w.diagnostics.parity,
            converged: w.diagnostics.converged,
        };
        if w.diagnostics.converged {
            Ok(MpwStatus::Ok)
        } else {
            Err((
                MpwStatus::NotConverged,
                format!("not converged: residual {:e}", w.diagnostics.residual),
            ))
        }
    })
}

/// New sweep around `params`. `options` may be null.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn mpw_sweep_new(
    params: *const MpwParams,
    options: *const MpwOptions,
    out: *mut *mut MpwSweep,
) -> MpwStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let base = to_params(p);
        base.validate().map_err(fail)?;
        let options = to_options(options);
        options.validate().map_err(fail)?;
        *out = Box::into_raw(Box::new(MpwSweep {
            base,
            options,
            axes: Vec::new(),
            rows: Vec::new(),
        }));
        Ok(MpwStatus::Ok)
    })
}

/// Add an axis (`"v_f"`, `"v_b"`, `"mu"`, `"eps_f"`, `"eps_b"`); the first
/// axis added varies slowest. Clears previous results.
///
/// # Safety
/// `sweep` must come from `mpw_sweep_new`; `name` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mpw_sweep_add_axis(
    sweep: *mut MpwSweep,
    name: *const c_char,
    start: f64,
    stop: f64,
    step: f64,
) -> MpwStatus {
    guard(|| {
        let s = sweep.as_mut().ok_or_else(|| null("sweep"))?;
        let name: ParamName = c_str(name, "name")?.parse().map_err(fail)?;
        let axis = Axis::new(name, start, stop, step).map_err(fail)?;
        let mut axes = s.axes.clone();
        axes.push(axis);
        SweepSpec::new(s.base, axes.clone(), s.options).map_err(fail)?;
        s.axes = axes;
        s.rows.clear();
        Ok(MpwStatus::Ok)
    })
}

/// Evaluate the grid with up to `workers` threads (0: `MPW_WORKERS` or all
/// cores). Failed points are kept as rows with `converged = false`, and the
/// call then returns `MPW_STATUS_NOT_CONVERGED`.
///
/// # Safety
/// `sweep` must come from `mpw_sweep_new`.
#[no_mangle]
pub unsafe extern "C" fn mpw_sweep_run(sweep: *mut MpwSweep, workers: u32) -> MpwStatus {
    guard(|| {
        let s = sweep.as_mut().ok_or_else(|| null("sweep"))?;
        let spec = SweepSpec::new(s.base, s.axes.clone(), s.options).map_err(fail)?;
        let workers = (workers > 0).then_some(workers as usize);
        s.rows = sweep::run_sweep(&spec, workers).map_err(fail)?;
        let failed = s.rows.iter().filter(|r| !r.converged).count();
        if failed == 0 {
            Ok(MpwStatus::Ok)
        } else {
            Err((MpwStatus::NotConverged, format!("{failed} of {} points failed", s.rows.len())))
        }
    })
}

/// Rows available after `mpw_sweep_run`; 0 for a null handle.
///
/// # Safety
/// `sweep` must be null or come from `mpw_sweep_new`.
#[no_mangle]
pub unsafe extern "C" fn mpw_sweep_row_count(sweep: *const MpwSweep) -> usize {
    sweep.as_ref().map_or(0, |s| s.rows.len())
}

/// # Safety
/// `sweep` must come from `mpw_sweep_new`; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn mpw_sweep_get_row(sweep: *const MpwSweep, index: usize, out: *mut MpwSweepRow) -> MpwStatus {
    guard(|| {
        let s = sweep.as_ref().ok_or_else(|| null("sweep"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let row = s.rows.get(index).ok_or_else(|| {
            (
                MpwStatus::InvalidArgument,
                format!("row {index} out of range ({} rows)", s.rows.len()),
            )
        })?;
        *out = row_to_c(row);
        Ok(MpwStatus::Ok)
    })
}

/// Write the rows in the CLI's CSV format (wall times written as 0).
///
/// # Safety
/// `sweep` must come from `mpw_sweep_new`; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn mpw_sweep_write_csv(sweep: *const MpwSweep, path: *const c_char) -> MpwStatus {
    guard(|| {
        let s = sweep.as_ref().ok_or_else(|| null("sweep"))?;
        let path = c_str(path, "path")?;
        sweep::write_csv(Path::new(path), &s.rows, false).map_err(fail)?;
        Ok(MpwStatus::Ok)
    })
}

/// Release a sweep; null is ignored.
///
/// # Safety
/// `sweep` must be null or come from `mpw_sweep_new` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn mpw_sweep_free(sweep: *mut MpwSweep) {
    if !sweep.is_null() {
        drop(Box::from_raw(sweep));
    }
}
