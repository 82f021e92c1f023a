//! C interface to `bt-core`.
//!
//! Problems and solve results are opaque heap handles released with their
//! `_free` function. Every call returns a [`BtStatus`]; on failure the
//! message is available from [`bt_last_error_message`] on the same thread.
//! Matrices are passed row-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bt_core::error::Error;
use bt_core::model::{Matrix, OtProblem, Sense};
use bt_core::oracle::lp_oracle;
use bt_core::solver::{make_schedule, solve, AnnealingSchedule, SolveOptions, SolveOutput};
use bt_core::verify::{hilbert_distance, verify_balanced};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Bad parameter or buffer length.
    InvalidArgument = 2,
    /// The problem data failed validation.
    InvalidProblem = 3,
    /// The solve stopped at its iteration limit; the result is still set.
    NotConverged = 4,
    /// Overflow, underflow or a stalled iteration.
    Numerical = 5,
    /// The exact oracle refused a problem above its size guard.
    SizeGuard = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BtSense {
    Maximize = 0,
    Minimize = 1,
}

/// Opaque transport problem.
pub struct BtProblem {
    inner: OtProblem,
}

/// Opaque solve result.
pub struct BtSolveResult {
    inner: SolveOutput,
}

/// Balance check of a plan. Locations are 0-based, -1 when absent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BtKktReport {
    pub is_balanced: bool,
    pub max_slackness_violation: f64,
    pub slackness_row: i64,
    pub slackness_col: i64,
    pub max_dual_infeasibility: f64,
    pub infeasibility_row: i64,
    pub infeasibility_col: i64,
    pub row_residual: f64,
    pub col_residual: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> BtStatus {
    match e {
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => BtStatus::InvalidArgument,
        Error::NumericalDegeneracy(_)
        | Error::NonFinite { .. }
        | Error::Overflow { .. }
        | Error::DivisionDegeneracy { .. } => BtStatus::Numerical,
        Error::MaxItersExceeded(_) => BtStatus::NotConverged,
        Error::SizeGuardExceeded { .. } => BtStatus::SizeGuard,
        _ => BtStatus::InvalidProblem,
    }
}

/// Runs `f` with panics and library errors turned into status codes.
fn guard(f: impl FnOnce() -> Result<BtStatus, (BtStatus, String)>) -> BtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside bt-core");
            BtStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (BtStatus, String) {
    (status_of(&e), e.to_string())
}

fn null_err(what: &str) -> (BtStatus, String) {
    (BtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(
    p: *const f64,
    len: usize,
    what: &str,
) -> Result<&'a [f64], (BtStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null_err(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(
    p: *mut f64,
    len: usize,
    expected: usize,
    what: &str,
) -> Result<&'a mut [f64], (BtStatus, String)> {
    if p.is_null() {
        return Err(null_err(what));
    }
    if len != expected {
        return Err((
            BtStatus::InvalidArgument,
            format!("{what} has length {len}, expected {expected}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn problem_ref<'a>(p: *const BtProblem) -> Result<&'a OtProblem, (BtStatus, String)> {
    p.as_ref()
        .map(|p| &p.inner)
        .ok_or_else(|| null_err("problem"))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bt_version() -> *const c_char {
    static VERSION: &CStr =
        match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
            Ok(v) => v,
            Err(_) => panic!("version string"),
        };
    VERSION.as_ptr()
}

/// Builds a problem from `n * m` weights and the two marginals.
#[no_mangle]
pub unsafe extern "C" fn bt_problem_new(
    n: usize,
    m: usize,
    weights: *const f64,
    row_marginals: *const f64,
    col_marginals: *const f64,
    sense: BtSense,
    out: *mut *mut BtProblem,
) -> BtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        *out = ptr::null_mut();
        let w = slice(weights, n * m, "weights")?;
        let r = slice(row_marginals, n, "row marginals")?;
        let c = slice(col_marginals, m, "column marginals")?;
        let a = Matrix::from_shape_vec((n, m), w.to_vec())
            .map_err(|e| (BtStatus::InvalidArgument, e.to_string()))?;
        let sense = match sense {
            BtSense::Maximize => Sense::Maximize,
            BtSense::Minimize => Sense::Minimize,
        };
        let inner = OtProblem::new(a, r.to_vec(), c.to_vec(), sense).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(BtProblem { inner }));
        Ok(BtStatus::Ok)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_problem_free(problem: *mut BtProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Solves with `stages` annealing stages ending at `eta`, each reducing the
/// temperature by `factor` (ignored when `stages == 1`). `max_iters` of 0
/// selects the default limit. On `BT_STATUS_NOT_CONVERGED` the best iterate
/// is still returned in `*out`.
#[no_mangle]
pub unsafe extern "C" fn bt_solve(
    problem: *const BtProblem,
    eta: f64,
    stages: usize,
    factor: f64,
    tol: f64,
    max_iters: usize,
    out: *mut *mut BtSolveResult,
) -> BtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        *out = ptr::null_mut();
        let p = problem_ref(problem)?;
        let schedule = if stages <= 1 {
            AnnealingSchedule::single(eta, tol)
        } else {
            make_schedule(eta, stages, factor, tol)
        }
        .map_err(lib_err)?;
        let mut opts = SolveOptions::default();
        if max_iters > 0 {
            opts.max_iters_per_stage = max_iters;
        }
        let inner = solve(p, &schedule, &opts).map_err(lib_err)?;
        let status = if inner.converged {
            BtStatus::Ok
        } else {
            set_error("iteration limit reached before the tolerance");
            BtStatus::NotConverged
        };
        *out = Box::into_raw(Box::new(BtSolveResult { inner }));
        Ok(status)
    })
}

#[no_mangle]
pub unsafe extern "C" fn bt_result_free(result: *mut BtSolveResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[no_mangle]
pub unsafe extern "C" fn bt_result_rows(result: *const BtSolveResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.plan.values.nrows())
}

#[no_mangle]
pub unsafe extern "C" fn bt_result_cols(result: *const BtSolveResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.plan.values.ncols())
}

#[no_mangle]
pub unsafe extern "C" fn bt_result_converged(result: *const BtSolveResult) -> bool {
    result.as_ref().is_some_and(|r| r.inner.converged)
}

/// Total full steps over all stages.
#[no_mangle]
pub unsafe extern "C" fn bt_result_iterations(result: *const BtSolveResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.iterations())
}

/// Criterion at the end of the last stage; NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn bt_result_final_criterion(result: *const BtSolveResult) -> f64 {
    result
        .as_ref()
        .map_or(f64::NAN, |r| r.inner.final_criterion())
}

/// Copies the plan into `out` (row-major, `len == rows * cols`).
#[no_mangle]
pub unsafe extern "C" fn bt_result_plan(
    result: *const BtSolveResult,
    out: *mut f64,
    len: usize,
) -> BtStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null_err("result"))?;
        let x = &r.inner.plan.values;
        let dst = slice_mut(out, len, x.len(), "plan buffer")?;
        dst.iter_mut().zip(x.iter()).for_each(|(d, v)| *d = *v);
        Ok(BtStatus::Ok)
    })
}

/// Copies the row weights `alpha` (length rows) and column multipliers
/// `beta` (length cols).
#[no_mangle]
pub unsafe extern "C" fn bt_result_scalings(
    result: *const BtSolveResult,
    alpha: *mut f64,
    n: usize,
    beta: *mut f64,
    m: usize,
) -> BtStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null_err("result"))?;
        let s = &r.inner.scalings;
        slice_mut(alpha, n, s.alpha.len(), "alpha")?.copy_from_slice(&s.alpha);
        slice_mut(beta, m, s.beta.len(), "beta")?.copy_from_slice(&s.beta);
        Ok(BtStatus::Ok)
    })
}

/// Exact optimum by the transportation simplex. `plan` may be null when
/// only the objective is wanted.
#[no_mangle]
pub unsafe extern "C" fn bt_lp_oracle(
    problem: *const BtProblem,
    plan: *mut f64,
    len: usize,
    objective: *mut f64,
) -> BtStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        let sol = lp_oracle(p).map_err(lib_err)?;
        if !plan.is_null() {
            let dst = slice_mut(plan, len, p.n() * p.m(), "plan buffer")?;
            dst.iter_mut()
                .zip(sol.plan.values.iter())
                .for_each(|(d, v)| *d = *v);
        }
        if !objective.is_null() {
            *objective = sol.objective;
        }
        Ok(BtStatus::Ok)
    })
}

/// Checks `plan` for balance, recovering duals from its support.
#[no_mangle]
pub unsafe extern "C" fn bt_verify(
    problem: *const BtProblem,
    plan: *const f64,
    len: usize,
    out: *mut BtKktReport,
) -> BtStatus {
    guard(|| {
        let p = problem_ref(problem)?;
        if out.is_null() {
            return Err(null_err("out"));
        }
        if len != p.n() * p.m() {
            return Err((
                BtStatus::InvalidArgument,
                format!("plan has length {len}, expected {}", p.n() * p.m()),
            ));
        }
        let x = Matrix::from_shape_vec((p.n(), p.m()), slice(plan, len, "plan")?.to_vec())
            .map_err(|e| (BtStatus::InvalidArgument, e.to_string()))?;
        let rep = verify_balanced(p, &x, None).map_err(lib_err)?;
        let loc = |l: Option<(usize, usize)>| l.map_or((-1, -1), |(i, j)| (i as i64, j as i64));
        let (sr, sc) = loc(rep.slackness_location);
        let (ir, ic) = loc(rep.infeasibility_location);
        *out = BtKktReport {
            is_balanced: rep.is_balanced,
            max_slackness_violation: rep.max_slackness_violation,
            slackness_row: sr,
            slackness_col: sc,
            max_dual_infeasibility: rep.max_dual_infeasibility,
            infeasibility_row: ir,
            infeasibility_col: ic,
            row_residual: rep.marginal_residuals.0,
            col_residual: rep.marginal_residuals.1,
            primal_objective: rep.objectives.total_ot_value,
            dual_objective: rep.objectives.dual_value.unwrap_or(f64::NAN),
            duality_gap: rep.duality_gap,
        };
        Ok(BtStatus::Ok)
    })
}

/// Hilbert projective distance between two positive vectors of length `len`.
#[no_mangle]
pub unsafe extern "C" fn bt_hilbert_distance(
    x: *const f64,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> BtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null_err("out"));
        }
        let d = hilbert_distance(slice(x, len, "x")?, slice(y, len, "y")?).map_err(lib_err)?;
        *out = d;
        Ok(BtStatus::Ok)
    })
}
