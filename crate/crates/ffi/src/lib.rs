//! C ABI over the coupled solver.
//!
//! Objects are opaque handles created by `hp_*_load`/`hp_solve` and released
//! with the matching `hp_*_free`. Every fallible call returns an
//! [`HpStatus`]; on failure `hp_last_error` describes the cause for the
//! calling thread. Strings returned by the library are freed with
//! `hp_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hyperpara::coupling::{compute_bounds_report, positivity_audit, solve_coupled, CoupledTrace, Scenario};
use hyperpara::error::{CouplingError, Error};
use hyperpara::io::{cmd_run, load_scenario, parse_scenario};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Unreadable, malformed or invalid scenario.
    Scenario = 3,
    /// Picard iteration failed or a solver rejected its input.
    Solver = 4,
    /// Writing artifacts failed.
    Io = 5,
    /// Index past the end or buffer too small.
    OutOfRange = 6,
    /// Internal panic; the handle involved must not be reused.
    Panic = 7,
}

/// A validated scenario.
pub struct HpScenario {
    inner: Scenario,
}

/// A solved coupled trace together with the scenario it came from.
pub struct HpTrace {
    scenario: Scenario,
    inner: CoupledTrace,
}

/// Norms of both components at one stored time.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HpNorms {
    pub t: f64,
    pub u_l1: f64,
    pub u_linf: f64,
    pub u_tv: f64,
    pub w_l1: f64,
    pub w_linf: f64,
    pub w_tv: f64,
}

/// Condensed a-priori ledger.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HpBoundsSummary {
    /// 1 if all six inequalities hold, else 0.
    pub pass: i32,
    /// Largest lhs/rhs over all inequalities and times.
    pub max_ratio: f64,
    pub k_v: f64,
    pub c_v: f64,
    pub u_min: f64,
    pub w_min: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: HpStatus, msg: impl Into<String>) -> HpStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> HpStatus {
    match e {
        Error::Scenario(_) | Error::Expr(_) => HpStatus::Scenario,
        Error::Coupling(CouplingError::InvalidScenario { .. }) => HpStatus::Scenario,
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) => HpStatus::Io,
        _ => HpStatus::Solver,
    }
}

fn from_error(e: Error) -> HpStatus {
    let status = status_of(&e);
    let mut msg = e.to_string();
    let mut source = std::error::Error::source(&e);
    while let Some(s) = source {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        source = s.source();
    }
    fail(status, msg)
}

/// Runs `f`, converting panics into [`HpStatus::Panic`].
fn guard(f: impl FnOnce() -> HpStatus) -> HpStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(HpStatus::Panic, format!("panic: {msg}"))
        }
    }
}

/// # Safety
/// `s` must be NULL or a NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, HpStatus> {
    if s.is_null() {
        return Err(fail(HpStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(HpStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `p` must be NULL or a handle from this library that has not been freed.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, HpStatus> {
    p.as_ref().ok_or_else(|| fail(HpStatus::NullPointer, format!("{what} is NULL")))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn hp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_scenario_load(path: *const c_char, out: *mut *mut HpScenario) -> HpStatus {
    guard(|| {
        if out.is_null() {
            return fail(HpStatus::NullPointer, "out is NULL");
        }
        let path = tri!(read_str(path, "path"));
        match load_scenario(Path::new(path)) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(HpScenario { inner }));
                HpStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Parses and validates a scenario document held in memory.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_scenario_parse(text: *const c_char, out: *mut *mut HpScenario) -> HpStatus {
    guard(|| {
        if out.is_null() {
            return fail(HpStatus::NullPointer, "out is NULL");
        }
        let text = tri!(read_str(text, "text"));
        match parse_scenario(text, Path::new("<memory>")) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(HpScenario { inner: f.scenario }));
                HpStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Number of cells of the scenario's grid.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_scenario_cell_count(scenario: *const HpScenario, out: *mut usize) -> HpStatus {
    guard(|| {
        let s = tri!(handle(scenario, "scenario"));
        if out.is_null() {
            return fail(HpStatus::NullPointer, "out is NULL");
        }
        *out = s.inner.cells.iter().product();
        HpStatus::Ok
    })
}

/// Releases a scenario. NULL is ignored.
///
/// # Safety
/// `scenario` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hp_scenario_free(scenario: *mut HpScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Solves the coupled system.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_solve(scenario: *const HpScenario, out: *mut *mut HpTrace) -> HpStatus {
    guard(|| {
        let s = tri!(handle(scenario, "scenario"));
        if out.is_null() {
            return fail(HpStatus::NullPointer, "out is NULL");
        }
        match solve_coupled(&s.inner) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(HpTrace {
                    scenario: s.inner.clone(),
                    inner,
                }));
                HpStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Releases a trace. NULL is ignored.
///
/// # Safety
/// `trace` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hp_trace_free(trace: *mut HpTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// Number of stored times (steps + 1); 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_trace_len(trace: *const HpTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.times.len())
}

/// Number of cells per snapshot; 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hp_trace_cell_count(trace: *const HpTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.inner.u[0].len())
}

/// Norms at stored time `k`.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_trace_norms(trace: *const HpTrace, k: usize, out: *mut HpNorms) -> HpStatus {
    guard(|| {
        let t = tri!(handle(trace, "trace"));
        if out.is_null() {
            return fail(HpStatus::NullPointer, "out is NULL");
        }
        let n = t.inner.times.len();
        if k >= n {
            return fail(HpStatus::OutOfRange, format!("index {k} out of range (len {n})"));
        }
        let (u, w) = (&t.inner.u[k], &t.inner.w[k]);
        *out = HpNorms {
            t: t.inner.times[k],
            u_l1: u.l1(),
            u_linf: u.linf(),
            u_tv: u.tv(),
            w_l1: w.l1(),
            w_linf: w.linf(),
            w_tv: w.tv(),
        };
        HpStatus::Ok
    })
}

unsafe fn copy_snapshot(
    trace: *const HpTrace,
    k: usize,
    buf: *mut f64,
    len: usize,
    pick: fn(&CoupledTrace, usize) -> &[f64],
) -> HpStatus {
    guard(|| {
        let t = tri!(handle(trace, "trace"));
        if buf.is_null() {
            return fail(HpStatus::NullPointer, "buf is NULL");
        }
        let n = t.inner.times.len();
        if k >= n {
            return fail(HpStatus::OutOfRange, format!("index {k} out of range (len {n})"));
        }
        let values = pick(&t.inner, k);
        if len < values.len() {
            return fail(
                HpStatus::OutOfRange,
                format!("buffer holds {len} values, snapshot has {}", values.len()),
            );
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        HpStatus::Ok
    })
}

/// Copies the `u` snapshot at stored time `k` into `buf` (row-major, `x`
/// fastest), which must hold `hp_trace_cell_count` values.
///
/// # Safety
/// `trace` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hp_trace_u(trace: *const HpTrace, k: usize, buf: *mut f64, len: usize) -> HpStatus {
    copy_snapshot(trace, k, buf, len, |t, k| t.u[k].values())
}

/// Copies the `w` snapshot at stored time `k`; see [`hp_trace_u`].
///
/// # Safety
/// `trace` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hp_trace_w(trace: *const HpTrace, k: usize, buf: *mut f64, len: usize) -> HpStatus {
    copy_snapshot(trace, k, buf, len, |t, k| t.w[k].values())
}

/// Computes the a-priori ledger of a trace.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_trace_bounds(trace: *const HpTrace, out: *mut HpBoundsSummary) -> HpStatus {
    guard(|| {
        let t = tri!(handle(trace, "trace"));
        if out.is_null() {
            return fail(HpStatus::NullPointer, "out is NULL");
        }
        let report = match compute_bounds_report(&t.inner, &t.scenario) {
            Ok(r) => r,
            Err(e) => return from_error(e.into()),
        };
        let pos = positivity_audit(&t.inner);
        *out = HpBoundsSummary {
            pass: report.pass as i32,
            max_ratio: report.inequalities.iter().map(|i| i.max_ratio).fold(0.0, f64::max),
            k_v: report.constants.k_v,
            c_v: report.constants.c_v,
            u_min: pos.u_min,
            w_min: pos.w_min,
        };
        HpStatus::Ok
    })
}

/// The full ledger as JSON; release with `hp_string_free`.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hp_trace_bounds_json(trace: *const HpTrace, out: *mut *mut c_char) -> HpStatus {
    guard(|| {
        let t = tri!(handle(trace, "trace"));
        if out.is_null() {
            return fail(HpStatus::NullPointer, "out is NULL");
        }
        let json = compute_bounds_report(&t.inner, &t.scenario)
            .map_err(Error::from)
            .and_then(|r| serde_json::to_string(&r).map_err(Error::from));
        match json {
            Ok(s) => {
                *out = CString::new(s).expect("JSON has no NUL").into_raw();
                HpStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must be NULL or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads `scenario_path`, solves, and writes all run artifacts to `out_dir`
/// (NULL selects the scenario's output directory).
///
/// # Safety
/// Both arguments must be NULL-or-NUL-terminated strings; `scenario_path`
/// must not be NULL.
#[no_mangle]
pub unsafe extern "C" fn hp_run(scenario_path: *const c_char, out_dir: *const c_char) -> HpStatus {
    guard(|| {
        let path = tri!(read_str(scenario_path, "scenario_path"));
        let out = if out_dir.is_null() {
            None
        } else {
            Some(Path::new(tri!(read_str(out_dir, "out_dir"))))
        };
        match cmd_run(Path::new(path), out) {
            Ok(_) => HpStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}
