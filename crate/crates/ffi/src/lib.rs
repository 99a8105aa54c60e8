//! C ABI over the `cycip` library.
//!
//! Conventions:
//! - every fallible function returns a [`CycipStatus`]; on failure a message
//!   is available from [`cycip_last_error`] on the same thread;
//! - objects are opaque handles created by `cycip_*_new`/`load`/`generate`
//!   style functions and released with the matching `*_free`;
//! - arrays are passed as pointer + length, and output arrays must be
//!   allocated by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use cycip::bench::{profile_value, ratios_from_times, ControlTemplate, StartPoint};
use cycip::geometry::{ConstraintSet, Hyperplane, Hyperslab};
use cycip::operators::{IntrepidProjector, Operator};
use cycip::road::{
    compile_constraints, generate_problem, read_problem, read_problem_file, verify_feasible,
    GeneratorParams, OperatorPolicy, RoadProblem,
};
use cycip::solver::{run_cycip, Metric, SolveResult, SolveStatus, SolverConfig};

/// Return codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycipStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    SolverError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycipMetric {
    D2 = 0,
    Dinf = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycipControl {
    Cyclic = 0,
    Random = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycipOperators {
    Intrepid = 0,
    Projection = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycipStart {
    Interpolant = 0,
    Zero = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycipSolveStatus {
    Solved = 0,
    IterationLimit = 1,
    TimeLimit = 2,
}

/// Solver settings; obtain defaults from [`cycip_solve_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CycipSolveOptions {
    pub eps: f64,
    pub metric: CycipMetric,
    pub control: CycipControl,
    pub seed: u64,
    /// Seconds; `<= 0` disables the time limit.
    pub max_time: f64,
    pub max_iterations: u64,
    pub operators: CycipOperators,
    pub start: CycipStart,
}

/// Opaque road problem.
pub struct CycipProblem {
    inner: RoadProblem,
}

/// Opaque solver result.
pub struct CycipResult {
    inner: SolveResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(code: CycipStatus, msg: impl Into<String>) -> CycipStatus {
    set_error(msg);
    code
}

fn guard(f: impl FnOnce() -> CycipStatus) -> CycipStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|_| fail(CycipStatus::Panic, "internal panic"))
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Option<&'a [f64]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize) -> Option<&'a mut [f64]> {
    if len == 0 {
        Some(&mut [])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(p, len))
    }
}

/// Message for the last failing call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cycip_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cycip_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a `roadfp/1` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cycip_problem_load(
    path: *const c_char,
    out: *mut *mut CycipProblem,
) -> CycipStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(CycipStatus::NullPointer, "null argument");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(CycipStatus::InvalidArgument, "path is not UTF-8");
        };
        match read_problem_file(path) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(CycipProblem { inner: p }));
                CycipStatus::Ok
            }
            Err(cycip::road::RoadError::Io(e)) => fail(CycipStatus::IoError, e.to_string()),
            Err(e) => fail(CycipStatus::ParseError, e.to_string()),
        }
    })
}

/// Parses `roadfp/1` text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cycip_problem_parse(
    text: *const c_char,
    out: *mut *mut CycipProblem,
) -> CycipStatus {
    guard(|| {
        if text.is_null() || out.is_null() {
            return fail(CycipStatus::NullPointer, "null argument");
        }
        match read_problem(CStr::from_ptr(text).to_bytes()) {
            Ok(p) => {
                *out = Box::into_raw(Box::new(CycipProblem { inner: p }));
                CycipStatus::Ok
            }
            Err(e) => fail(CycipStatus::ParseError, e.to_string()),
        }
    })
}

/// Generates a strictly feasible problem with `n` stations. A positive
/// `min_slope` adds the minimum absolute slope constraint. When `witness`
/// is non-NULL it receives a feasible point (`n` values).
///
/// # Safety
/// `out` must be valid; `witness` must be NULL or point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn cycip_problem_generate(
    n: usize,
    seed: u64,
    min_slope: f64,
    out: *mut *mut CycipProblem,
    witness: *mut f64,
) -> CycipStatus {
    guard(|| {
        if out.is_null() {
            return fail(CycipStatus::NullPointer, "null argument");
        }
        let params = GeneratorParams {
            min_slope: (min_slope > 0.0).then_some(min_slope),
            ..GeneratorParams::default()
        };
        match generate_problem(n, seed, &params) {
            Ok((p, w)) => {
                if !witness.is_null() {
                    std::slice::from_raw_parts_mut(witness, n).copy_from_slice(&w.point);
                }
                *out = Box::into_raw(Box::new(CycipProblem { inner: p }));
                CycipStatus::Ok
            }
            Err(e) => fail(CycipStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Number of stations, or 0 for NULL.
///
/// # Safety
/// `p` must be NULL or a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn cycip_problem_dim(p: *const CycipProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.n())
}

/// # Safety
/// `p` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cycip_problem_free(p: *mut CycipProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

#[no_mangle]
pub extern "C" fn cycip_solve_options_default() -> CycipSolveOptions {
    CycipSolveOptions {
        eps: cycip::solver::DEFAULT_TOLERANCE,
        metric: CycipMetric::Dinf,
        control: CycipControl::Cyclic,
        seed: 0,
        max_time: cycip::solver::DEFAULT_MAX_TIME.as_secs_f64(),
        max_iterations: cycip::solver::DEFAULT_MAX_ITERATIONS,
        operators: CycipOperators::Intrepid,
        start: CycipStart::Interpolant,
    }
}

/// Runs the solver. A run that stops at a limit still returns `Ok`; read
/// the outcome with [`cycip_result_status`].
///
/// # Safety
/// `p` must be a live problem, `opts` NULL (defaults) or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cycip_solve(
    p: *const CycipProblem,
    opts: *const CycipSolveOptions,
    out: *mut *mut CycipResult,
) -> CycipStatus {
    guard(|| {
        let (Some(p), false) = (p.as_ref(), out.is_null()) else {
            return fail(CycipStatus::NullPointer, "null argument");
        };
        let o = opts.as_ref().copied().unwrap_or_else(|| cycip_solve_options_default());
        let policy = match o.operators {
            CycipOperators::Intrepid => OperatorPolicy::Intrepid,
            CycipOperators::Projection => OperatorPolicy::Projection,
        };
        let fp = match compile_constraints(&p.inner).and_then(|c| c.to_problem(policy)) {
            Ok(fp) => fp,
            Err(e) => return fail(CycipStatus::InvalidArgument, e.to_string()),
        };
        let control = match o.control {
            CycipControl::Cyclic => ControlTemplate::Cyclic,
            CycipControl::Random => ControlTemplate::Random,
        };
        let cfg = SolverConfig {
            tolerance: o.eps,
            metric: match o.metric {
                CycipMetric::D2 => Metric::D2,
                CycipMetric::Dinf => Metric::Dinf,
            },
            max_iterations: o.max_iterations,
            max_time: (o.max_time > 0.0)
                .then(|| Duration::try_from_secs_f64(o.max_time).ok())
                .flatten(),
            control: control.instantiate(fp.len(), o.seed),
            trace: cycip::solver::TraceDepth::None,
        };
        let start = match o.start {
            CycipStart::Interpolant => StartPoint::Interpolant,
            CycipStart::Zero => StartPoint::Zero,
        };
        match run_cycip(&fp, &cfg, &start.point(&p.inner)) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(CycipResult { inner: r }));
                CycipStatus::Ok
            }
            Err(e) => fail(CycipStatus::SolverError, e.to_string()),
        }
    })
}

/// # Safety
/// `r` must be a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cycip_result_status(r: *const CycipResult) -> CycipSolveStatus {
    match r.as_ref().map(|r| r.inner.status) {
        Some(SolveStatus::Solved) => CycipSolveStatus::Solved,
        Some(SolveStatus::TimeLimit) => CycipSolveStatus::TimeLimit,
        _ => CycipSolveStatus::IterationLimit,
    }
}

/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cycip_result_iterations(r: *const CycipResult) -> u64 {
    r.as_ref().map_or(0, |r| r.inner.iterations)
}

/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cycip_result_d2(r: *const CycipResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.d2)
}

/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cycip_result_dinf(r: *const CycipResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.dinf)
}

/// Solver wall time in milliseconds.
///
/// # Safety
/// `r` must be NULL or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn cycip_result_time_ms(r: *const CycipResult) -> f64 {
    r.as_ref()
        .map_or(f64::NAN, |r| r.inner.wall_time.as_secs_f64() * 1e3)
}

/// Copies the final point into `buf` (`len` must be at least the problem
/// dimension).
///
/// # Safety
/// `r` must be a live result handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cycip_result_point(
    r: *const CycipResult,
    buf: *mut f64,
    len: usize,
) -> CycipStatus {
    guard(|| {
        let Some(r) = r.as_ref() else {
            return fail(CycipStatus::NullPointer, "null result");
        };
        let x = &r.inner.point;
        if len < x.len() {
            return fail(
                CycipStatus::BufferTooSmall,
                format!("buffer holds {len} values, point has {}", x.len()),
            );
        }
        match slice_mut(buf, x.len()) {
            Some(out) => {
                out.copy_from_slice(x);
                CycipStatus::Ok
            }
            None => fail(CycipStatus::NullPointer, "null buffer"),
        }
    })
}

/// # Safety
/// `r` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cycip_result_free(r: *mut CycipResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Checks `x` against every constraint with slack tolerance `tol`;
/// `*feasible` receives 1 or 0.
///
/// # Safety
/// `p` must be a live problem, `x` must hold `len` doubles, `feasible`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn cycip_verify(
    p: *const CycipProblem,
    x: *const f64,
    len: usize,
    tol: f64,
    feasible: *mut i32,
) -> CycipStatus {
    guard(|| {
        let (Some(p), Some(x), false) = (p.as_ref(), slice(x, len), feasible.is_null()) else {
            return fail(CycipStatus::NullPointer, "null argument");
        };
        match verify_feasible(&p.inner, x, tol) {
            Ok(rep) => {
                *feasible = i32::from(rep.passed());
                CycipStatus::Ok
            }
            Err(e) => fail(CycipStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Projects `x` (length `n`) in place onto `lower <= <a, x> <= upper`.
///
/// # Safety
/// `a` and `x` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn cycip_project_hyperslab(
    a: *const f64,
    n: usize,
    lower: f64,
    upper: f64,
    x: *mut f64,
) -> CycipStatus {
    guard(|| {
        let (Some(a), Some(x)) = (slice(a, n), slice_mut(x, n)) else {
            return fail(CycipStatus::NullPointer, "null argument");
        };
        match Hyperslab::new(a, lower, upper).and_then(|s| s.project(x)) {
            Ok(p) => {
                x.copy_from_slice(&p);
                CycipStatus::Ok
            }
            Err(e) => fail(CycipStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Applies the intrepid projector onto the `beta`-enlargement of the
/// hyperplane `<a, x> = offset` to `x` in place.
///
/// # Safety
/// `a` and `x` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn cycip_intrepid_hyperplane(
    a: *const f64,
    n: usize,
    offset: f64,
    beta: f64,
    x: *mut f64,
) -> CycipStatus {
    guard(|| {
        let (Some(a), Some(x)) = (slice(a, n), slice_mut(x, n)) else {
            return fail(CycipStatus::NullPointer, "null argument");
        };
        let q = match Hyperplane::new(a, offset) {
            Ok(h) => IntrepidProjector::new(h, beta).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        match q.and_then(|q| q.apply(x).map_err(|e| e.to_string())) {
            Ok(y) => {
                x.copy_from_slice(&y);
                CycipStatus::Ok
            }
            Err(e) => fail(CycipStatus::InvalidArgument, e),
        }
    })
}

/// Performance profile from a row-major timing matrix `times[a * n_problems
/// + p]` (seconds; NaN, infinite or negative entries mark unsolved runs).
/// Writes `rho[a * n_kappa + k]`.
///
/// # Safety
/// `times` must hold `n_algorithms * n_problems` doubles, `kappa` must
/// hold `n_kappa`, and `rho` must hold `n_algorithms * n_kappa`.
#[no_mangle]
pub unsafe extern "C" fn cycip_performance_profile(
    times: *const f64,
    n_algorithms: usize,
    n_problems: usize,
    kappa: *const f64,
    n_kappa: usize,
    rho: *mut f64,
) -> CycipStatus {
    guard(|| {
        let (Some(times), Some(kappa), Some(rho)) = (
            slice(times, n_algorithms * n_problems),
            slice(kappa, n_kappa),
            slice_mut(rho, n_algorithms * n_kappa),
        ) else {
            return fail(CycipStatus::NullPointer, "null argument");
        };
        if n_algorithms == 0 || n_problems == 0 {
            return fail(CycipStatus::InvalidArgument, "empty timing matrix");
        }
        let matrix: Vec<Vec<Option<f64>>> = times
            .chunks(n_problems)
            .map(|row| {
                row.iter()
                    .map(|&t| (t.is_finite() && t >= 0.0).then_some(t))
                    .collect()
            })
            .collect();
        let ratios = match ratios_from_times(&matrix) {
            Ok(r) => r,
            Err(e) => return fail(CycipStatus::InvalidArgument, e.to_string()),
        };
        for (row, out) in ratios.iter().zip(rho.chunks_mut(n_kappa.max(1))) {
            for (&k, o) in kappa.iter().zip(out.iter_mut()) {
                *o = profile_value(row, k);
            }
        }
        CycipStatus::Ok
    })
}
