use std::ffi::CStr;
use std::ptr;

use bt_ffi::*;

const A: [f64; 9] = [0.0, 1.0, 0.5, 0.7, 0.5, 0.3, 0.6, 0.3, 0.0];
const R: [f64; 3] = [0.25, 0.25, 0.5];
const C: [f64; 3] = [0.2, 0.6, 0.2];
const OPT: [f64; 9] = [0.0, 0.25, 0.0, 0.0, 0.05, 0.2, 0.2, 0.3, 0.0];

fn small_problem() -> *mut BtProblem {
    let mut p = ptr::null_mut();
    let st = unsafe {
        bt_problem_new(
            3,
            3,
            A.as_ptr(),
            R.as_ptr(),
            C.as_ptr(),
            BtSense::Maximize,
            &mut p,
        )
    };
    assert_eq!(st, BtStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let msg = bt_last_error_message();
    assert!(!msg.is_null());
    unsafe { CStr::from_ptr(msg) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn solve_and_read_back() {
    let p = small_problem();
    let mut res = ptr::null_mut();
    let st = unsafe { bt_solve(p, 1e-4, 12, 1.5, 0.01, 0, &mut res) };
    assert_eq!(st, BtStatus::Ok);
    unsafe {
        assert_eq!((bt_result_rows(res), bt_result_cols(res)), (3, 3));
        assert!(bt_result_converged(res));
        assert!(bt_result_iterations(res) > 0);
        assert!(bt_result_final_criterion(res) < 0.01);
        let mut plan = [0.0; 9];
        assert_eq!(bt_result_plan(res, plan.as_mut_ptr(), 9), BtStatus::Ok);
        for (x, y) in plan.iter().zip(OPT) {
            assert!((x - y).abs() <= 0.01);
        }
        let (mut alpha, mut beta) = ([0.0; 3], [0.0; 3]);
        assert_eq!(
            bt_result_scalings(res, alpha.as_mut_ptr(), 3, beta.as_mut_ptr(), 3),
            BtStatus::Ok
        );
        assert!(alpha.iter().chain(&beta).all(|v| *v > 0.0));
        assert_eq!(
            bt_result_plan(res, plan.as_mut_ptr(), 4),
            BtStatus::InvalidArgument
        );
        bt_result_free(res);
        bt_problem_free(p);
    }
}

#[test]
fn non_convergence_still_returns_a_result() {
    let p = small_problem();
    let mut res = ptr::null_mut();
    let st = unsafe { bt_solve(p, 1e-4, 1, 0.0, 0.01, 3, &mut res) };
    assert_eq!(st, BtStatus::NotConverged);
    assert!(!res.is_null());
    unsafe {
        assert!(!bt_result_converged(res));
        bt_result_free(res);
        bt_problem_free(p);
    }
}

#[test]
fn oracle_and_verify() {
    let p = small_problem();
    let mut plan = [0.0; 9];
    let mut obj = 0.0;
    unsafe {
        assert_eq!(
            bt_lp_oracle(p, plan.as_mut_ptr(), 9, &mut obj),
            BtStatus::Ok
        );
        assert!((obj - 0.545).abs() <= 1e-9);
        let mut rep = BtKktReport::default();
        assert_eq!(bt_verify(p, plan.as_ptr(), 9, &mut rep), BtStatus::Ok);
        assert!(rep.is_balanced);
        assert!(rep.duality_gap.abs() <= 1e-9);

        let bad = [0.05, 0.2, 0.0, 0.0, 0.05, 0.2, 0.15, 0.35, 0.0];
        assert_eq!(bt_verify(p, bad.as_ptr(), 9, &mut rep), BtStatus::Ok);
        assert!(!rep.is_balanced);
        assert_eq!((rep.slackness_row, rep.slackness_col), (0, 0));
        bt_problem_free(p);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut p = ptr::null_mut();
    let bad_r = [0.5, 0.25, 0.5];
    let st = unsafe {
        bt_problem_new(
            3,
            3,
            A.as_ptr(),
            bad_r.as_ptr(),
            C.as_ptr(),
            BtSense::Maximize,
            &mut p,
        )
    };
    assert_eq!(st, BtStatus::InvalidProblem);
    assert!(p.is_null());
    assert!(last_error().contains("feasibility"));

    let st = unsafe {
        bt_problem_new(
            3,
            3,
            ptr::null(),
            R.as_ptr(),
            C.as_ptr(),
            BtSense::Maximize,
            &mut p,
        )
    };
    assert_eq!(st, BtStatus::NullPointer);

    let p = small_problem();
    let mut res = ptr::null_mut();
    let st = unsafe { bt_solve(p, 0.0, 1, 0.0, 0.01, 0, &mut res) };
    assert_eq!(st, BtStatus::InvalidArgument);
    assert!(last_error().contains("floor"));
    assert!(res.is_null());
    unsafe {
        assert_eq!(
            bt_solve(ptr::null(), 0.1, 1, 0.0, 0.01, 0, &mut res),
            BtStatus::NullPointer
        );
        bt_problem_free(p);
        bt_problem_free(ptr::null_mut());
        bt_result_free(ptr::null_mut());
        assert_eq!(bt_result_rows(ptr::null()), 0);
    }
}

#[test]
fn hilbert_distance() {
    let (x, y) = ([1.0, 2.0, 4.0], [2.0, 2.0, 2.0]);
    let mut d = 0.0;
    unsafe {
        assert_eq!(
            bt_hilbert_distance(x.as_ptr(), y.as_ptr(), 3, &mut d),
            BtStatus::Ok
        );
        assert!((d - 4f64.ln()).abs() < 1e-15);
        let z = [1.0, 0.0, 1.0];
        assert_ne!(
            bt_hilbert_distance(x.as_ptr(), z.as_ptr(), 3, &mut d),
            BtStatus::Ok
        );
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(bt_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/bt.h"))
        .expect("generated header");
    for name in [
        "BT_H",
        "typedef struct BtProblem BtProblem",
        "typedef struct BtSolveResult BtSolveResult",
        "BT_STATUS_OK",
        "BT_STATUS_NOT_CONVERGED",
        "BtKktReport",
        "bt_problem_new",
        "bt_problem_free",
        "bt_solve",
        "bt_result_plan",
        "bt_result_scalings",
        "bt_result_free",
        "bt_lp_oracle",
        "bt_verify",
        "bt_hilbert_distance",
        "bt_last_error_message",
        "bt_version",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
