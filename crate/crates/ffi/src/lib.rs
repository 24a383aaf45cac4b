//! C interface to the thetalab library.
//!
//! Every function returns a [`TlStatus`]. On failure a message is kept per
//! thread and can be read with [`tl_last_error_message`]. Expressions are
//! opaque [`TlExpr`] handles released with [`tl_expr_free`]; strings handed
//! out by the library are released with [`tl_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use thetalab::forcing::moving_average;
use thetalab::funcspec::ScalarFunction;
use thetalab::runner::{load_config, run, RunOptions};
use thetalab::solver::{solve_scalar, Grid};
use thetalab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    DomainError = 4,
    InvalidArgument = 5,
    NumericalError = 6,
    ConfigError = 7,
    IoError = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// A parsed function of `t`.
pub struct TlExpr {
    f: ScalarFunction,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> TlStatus {
    match e {
        Error::Parse(_) => TlStatus::ParseError,
        Error::Domain { .. } | Error::NonPositiveWeight { .. } => TlStatus::DomainError,
        Error::InvalidArgument(_) | Error::GridMismatch(_) => TlStatus::InvalidArgument,
        Error::Quadrature { .. } | Error::Overflow(_) | Error::Convergence(_) => TlStatus::NumericalError,
        Error::Config { .. } => TlStatus::ConfigError,
        Error::Io { .. } => TlStatus::IoError,
    }
}

fn fail(status: TlStatus, msg: impl Into<String>) -> TlStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> TlStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

/// Runs `body`, turning panics into [`TlStatus::Panic`].
fn guard(body: impl FnOnce() -> TlStatus) -> TlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(TlStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, TlStatus> {
    if p.is_null() {
        return Err(fail(TlStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(TlStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

unsafe fn expr_arg<'a>(p: *const TlExpr) -> Result<&'a TlExpr, TlStatus> {
    p.as_ref().ok_or_else(|| fail(TlStatus::NullPointer, "expression handle is null"))
}

fn out_arg<T>(p: *mut T) -> Result<(), TlStatus> {
    if p.is_null() {
        Err(fail(TlStatus::NullPointer, "output pointer is null"))
    } else {
        Ok(())
    }
}

/// Parses `text` into a new handle stored in `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tl_expr_parse(text: *const c_char, out: *mut *mut TlExpr) -> TlStatus {
    guard(|| {
        try_ffi!(out_arg(out));
        let s = try_ffi!(str_arg(text, "text"));
        match ScalarFunction::parse(s) {
            Ok(f) => {
                *out = Box::into_raw(Box::new(TlExpr { f }));
                TlStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Evaluates the expression at `t`.
///
/// # Safety
/// `expr` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_expr_eval(expr: *const TlExpr, t: f64, out: *mut f64) -> TlStatus {
    guard(|| {
        let e = try_ffi!(expr_arg(expr));
        try_ffi!(out_arg(out));
        match e.f.eval(t) {
            Ok(v) => {
                *out = v;
                TlStatus::Ok
            }
            Err(err) => from_error(err),
        }
    })
}

/// Symbolic derivative as a new handle.
///
/// # Safety
/// `expr` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_expr_derivative(expr: *const TlExpr, out: *mut *mut TlExpr) -> TlStatus {
    guard(|| {
        let e = try_ffi!(expr_arg(expr));
        try_ffi!(out_arg(out));
        *out = Box::into_raw(Box::new(TlExpr { f: e.f.derivative() }));
        TlStatus::Ok
    })
}

/// Canonical text of the expression; free with [`tl_string_free`].
///
/// # Safety
/// `expr` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_expr_to_string(expr: *const TlExpr, out: *mut *mut c_char) -> TlStatus {
    guard(|| {
        let e = try_ffi!(expr_arg(expr));
        try_ffi!(out_arg(out));
        match CString::new(e.f.expr.to_string()) {
            Ok(s) => {
                *out = s.into_raw();
                TlStatus::Ok
            }
            Err(_) => fail(TlStatus::InvalidArgument, "expression text contains NUL"),
        }
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `expr` must be null or a handle returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn tl_expr_free(expr: *mut TlExpr) {
    if !expr.is_null() {
        drop(Box::from_raw(expr));
    }
}

/// `int_{(t - theta)^+}^t f(s) ds`.
///
/// # Safety
/// `f` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_moving_average(f: *const TlExpr, theta: f64, t: f64, quad_tol: f64, out: *mut f64) -> TlStatus {
    guard(|| {
        let e = try_ffi!(expr_arg(f));
        try_ffi!(out_arg(out));
        match moving_average(&e.f, theta, t, quad_tol) {
            Ok(v) => {
                *out = v;
                TlStatus::Ok
            }
            Err(err) => from_error(err),
        }
    })
}

/// Solves `y' = -alpha y + f`, `y(0) = y0` on the grid `0, h, ..., t_end`
/// and writes the samples into `values`. `*written` receives the number of
/// grid points; when `capacity` is too small nothing else is written and
/// [`TlStatus::BufferTooSmall`] is returned.
///
/// # Safety
/// `values` must point to `capacity` writable doubles, `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tl_solve_scalar(
    f: *const TlExpr,
    alpha: f64,
    y0: f64,
    t_end: f64,
    h: f64,
    quad_tol: f64,
    values: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> TlStatus {
    guard(|| {
        let e = try_ffi!(expr_arg(f));
        try_ffi!(out_arg(written));
        let grid = match Grid::spanning(0.0, t_end, h) {
            Ok(g) => g,
            Err(err) => return from_error(err),
        };
        *written = grid.n;
        if capacity < grid.n {
            return fail(
                TlStatus::BufferTooSmall,
                format!("need {} values, buffer holds {}", grid.n, capacity),
            );
        }
        try_ffi!(out_arg(values));
        match solve_scalar(&e.f, alpha, y0, &grid, quad_tol) {
            Ok(y) => {
                ptr::copy_nonoverlapping(y.values.as_ptr(), values, grid.n);
                TlStatus::Ok
            }
            Err(err) => from_error(err),
        }
    })
}

/// Runs a scenario file, writing artifacts under `out_dir`. `*exit_code`
/// receives the command-line exit code (0 when no scenario errored).
///
/// # Safety
/// Both paths must be NUL-terminated strings and `exit_code` valid.
#[no_mangle]
pub unsafe extern "C" fn tl_run_config(config_path: *const c_char, out_dir: *const c_char, exit_code: *mut c_int) -> TlStatus {
    guard(|| {
        try_ffi!(out_arg(exit_code));
        let cfg = try_ffi!(str_arg(config_path, "config_path"));
        let out = try_ffi!(str_arg(out_dir, "out_dir"));
        let configs = match load_config(Path::new(cfg)) {
            Ok(c) => c,
            Err(err) => {
                *exit_code = 2;
                return from_error(err);
            }
        };
        match run(&configs, Path::new(out), &RunOptions::default()) {
            Ok(m) => {
                *exit_code = m.exit_code();
                if m.exit_code() != 0 {
                    set_error(format!("{} scenario(s) failed", m.counts.error));
                }
                TlStatus::Ok
            }
            Err(err) => {
                *exit_code = if matches!(err, Error::Config { .. }) { 2 } else { 1 };
                from_error(err)
            }
        }
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
