//! Unregularized and classical scaling iterations: the max/min weight map,
//! both IPFP forms, and the generic multiplier iteration for strictly concave
//! rewards.

use crate::error::{Error, Result};
use crate::model::{col_sums, row_sums, DualPotentials, Matrix};

/// Largest `v` with `fl(v * b) <= target`. Starting from `target / b`, walks
/// at most a few ulps in either direction.
fn largest_scale_below(target: f64, b: f64) -> f64 {
    let mut v = target / b;
    while v * b > target {
        v = v.next_down();
    }
    loop {
        let up = v.next_up();
        if up * b <= target {
            v = up;
        } else {
            return v;
        }
    }
}

/// One application of the unregularized weight map:
/// `beta_j = max_i alpha_i b_ij`, `alpha^_i = min_j beta_j / b_ij`.
///
/// `alpha^_i` is the largest float for which no entry `alpha^_i b_ij` rounds
/// above its column maximum, which makes the map exactly idempotent in
/// floating point.
pub fn nonreg_step(alpha: &[f64], b: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive_matrix(b)?;
    if alpha.len() != b.nrows() {
        return Err(Error::DimensionMismatch {
            what: "alpha",
            expected: b.nrows(),
            got: alpha.len(),
        });
    }
    if let Some(i) = alpha.iter().position(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "alpha[{i}] must be positive and finite"
        )));
    }
    let mut beta = vec![0.0f64; b.ncols()];
    for (row, &a) in b.rows().into_iter().zip(alpha) {
        for (bj, &v) in beta.iter_mut().zip(row) {
            *bj = bj.max(a * v);
        }
    }
    let alpha_hat = b
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&beta)
                .map(|(&v, &bj)| largest_scale_below(bj, v))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    Ok((alpha_hat, beta))
}

pub(crate) fn check_positive_matrix(b: &Matrix) -> Result<()> {
    if b.is_empty() {
        return Err(Error::Empty("matrix has no entries"));
    }
    for ((i, j), &v) in b.indexed_iter() {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveEntry {
                row: i,
                col: j,
                value: v,
            });
        }
    }
    Ok(())
}

/// Eigenvalue estimate for `alpha -> alpha^`: a fixed point has every
/// component ratio equal to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointReport {
    pub theta: f64,
    pub is_fixed_point: bool,
    pub component_ratios: Vec<f64>,
}

pub fn fixed_point_report(alpha: &[f64], alpha_hat: &[f64], tol: f64) -> FixedPointReport {
    let component_ratios: Vec<f64> = alpha_hat.iter().zip(alpha).map(|(h, a)| h / a).collect();
    let theta = component_ratios.iter().copied().fold(f64::MIN, f64::max);
    let deviation = component_ratios
        .iter()
        .map(|r| (r - 1.0).abs())
        .fold(0.0, f64::max);
    FixedPointReport {
        theta,
        is_fixed_point: deviation <= tol,
        component_ratios,
    }
}

/// One iterate of the vector form of IPFP.
#[derive(Debug, Clone, PartialEq)]
pub struct IpfpVectorIterate {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub x: Matrix,
}

/// Cumulative IPFP: `v = c / (x0^T u)`, `u = r / (x0 v)`, `x = diag(u) x0 diag(v)`.
pub fn ipfp_vector(
    x0: &Matrix,
    u0: &[f64],
    r: &[f64],
    c: &[f64],
    iters: usize,
) -> Result<Vec<IpfpVectorIterate>> {
    check_positive_matrix(x0)?;
    check_lengths(x0, r, c)?;
    if u0.len() != x0.nrows() {
        return Err(Error::DimensionMismatch {
            what: "u0",
            expected: x0.nrows(),
            got: u0.len(),
        });
    }
    if iters == 0 {
        return Err(Error::InvalidParameter("iters must be at least 1".into()));
    }
    let (n, m) = x0.dim();
    let mut u = u0.to_vec();
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut v = vec![0.0; m];
        for j in 0..m {
            let denom: f64 = (0..n).map(|i| u[i] * x0[(i, j)]).sum();
            if denom == 0.0 {
                return Err(Error::DivisionDegeneracy {
                    what: "column",
                    index: j,
                });
            }
            v[j] = c[j] / denom;
        }
        for i in 0..n {
            let denom: f64 = (0..m).map(|j| x0[(i, j)] * v[j]).sum();
            if denom == 0.0 {
                return Err(Error::DivisionDegeneracy {
                    what: "row",
                    index: i,
                });
            }
            u[i] = r[i] / denom;
        }
        let x = Matrix::from_shape_fn((n, m), |(i, j)| u[i] * x0[(i, j)] * v[j]);
        out.push(IpfpVectorIterate { u: u.clone(), v, x });
    }
    Ok(out)
}

fn check_lengths(x: &Matrix, r: &[f64], c: &[f64]) -> Result<()> {
    if r.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            what: "row marginals",
            expected: x.nrows(),
            got: r.len(),
        });
    }
    if c.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            what: "column marginals",
            expected: x.ncols(),
            got: c.len(),
        });
    }
    Ok(())
}

/// Column-error window used to declare cycling.
pub const CYCLE_WINDOW: usize = 200;
/// Required relative improvement of the running minimum within a window.
pub const CYCLE_IMPROVEMENT: f64 = 0.9;
/// Column errors at or below this never count as cycling.
pub const CYCLE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct IpfpOptions {
    pub max_iters: usize,
    /// Convergence threshold on the column-error infinity norm.
    pub tol: f64,
    pub record: bool,
    pub detect_cycles: bool,
}

impl Default for IpfpOptions {
    fn default() -> Self {
        IpfpOptions {
            max_iters: 10_000,
            tol: 1e-10,
            record: false,
            detect_cycles: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpfpStatus {
    Converged,
    /// The column error stopped improving by the required factor for a full
    /// window while staying above the floor.
    Cycling,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct IpfpRun {
    pub status: IpfpStatus,
    pub iterations: usize,
    /// Column error after each full step; entry 0 is the starting matrix.
    pub column_errors: Vec<f64>,
    /// Full-step iterates when recording was requested.
    pub iterates: Vec<Matrix>,
    pub last: Matrix,
}

/// Incremental IPFP: column-normalize, then row-normalize, on a nonnegative
/// matrix. Zero entries stay zero, so supports that admit no feasible
/// scaling make the column error plateau; that is reported as cycling.
pub fn ipfp_matrix(x0: &Matrix, r: &[f64], c: &[f64], opts: &IpfpOptions) -> Result<IpfpRun> {
    check_lengths(x0, r, c)?;
    for ((i, j), &v) in x0.indexed_iter() {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::NegativeEntry {
                row: i,
                col: j,
                value: v,
            });
        }
    }
    let rs = row_sums(x0);
    if let Some(i) = rs.iter().position(|s| *s == 0.0) {
        return Err(Error::ZeroLine {
            what: "row",
            index: i,
        });
    }
    if let Some(j) = col_sums(x0).iter().position(|s| *s == 0.0) {
        return Err(Error::ZeroLine {
            what: "column",
            index: j,
        });
    }

    let col_error = |x: &Matrix| {
        col_sums(x)
            .iter()
            .zip(c)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max)
    };
    let row_error = |x: &Matrix| {
        row_sums(x)
            .iter()
            .zip(r)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max)
    };

    let mut x = x0.clone();
    let initial = col_error(&x);
    let mut run = IpfpRun {
        status: IpfpStatus::MaxIters,
        iterations: 0,
        column_errors: vec![initial],
        iterates: Vec::new(),
        last: Matrix::zeros((0, 0)),
    };
    if initial <= opts.tol && row_error(&x) <= opts.tol {
        run.status = IpfpStatus::Converged;
        run.last = x;
        return Ok(run);
    }

    let mut anchor = f64::INFINITY;
    let mut anchor_iter = 0;
    for k in 1..=opts.max_iters {
        let cs = col_sums(&x);
        for mut row in x.rows_mut() {
            for ((v, s), t) in row.iter_mut().zip(&cs).zip(c) {
                *v *= t / s;
            }
        }
        for (mut row, t) in x.rows_mut().into_iter().zip(r) {
            let s: f64 = row.iter().sum();
            let f = t / s;
            row.iter_mut().for_each(|v| *v *= f);
        }
        let err = col_error(&x);
        run.iterations = k;
        run.column_errors.push(err);
        if opts.record {
            run.iterates.push(x.clone());
        }
        if !err.is_finite() {
            return Err(Error::NonFinite { iteration: k });
        }
        if err <= opts.tol {
            run.status = IpfpStatus::Converged;
            break;
        }
        if opts.detect_cycles {
            if err < CYCLE_IMPROVEMENT * anchor {
                anchor = err;
                anchor_iter = k;
            } else if k - anchor_iter >= CYCLE_WINDOW && err > CYCLE_FLOOR {
                run.status = IpfpStatus::Cycling;
                break;
            }
        }
    }
    run.last = x;
    Ok(run)
}

/// Inverse marginal rewards `F_ij`: strictly decreasing and positive on the
/// whole real line.
pub trait ConcaveFamily {
    fn label(&self) -> &str;
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn inverse_marginal(&self, i: usize, j: usize, t: f64) -> f64;
    /// Initial step for bracket expansion around a previous multiplier.
    fn bracket_step(&self) -> f64 {
        1.0
    }
}

/// Spot-checks every `F_ij` at three points for positivity and strict decrease.
pub fn validate_family(family: &dyn ConcaveFamily) -> Result<()> {
    let probes = [-1.0, 0.0, 1.0];
    for i in 0..family.rows() {
        for j in 0..family.cols() {
            let vals: Vec<f64> = probes
                .iter()
                .map(|&t| family.inverse_marginal(i, j, t))
                .collect();
            if vals.iter().any(|v| !(*v > 0.0)) || vals.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(Error::InvalidParameter(format!(
                    "family '{}' is not positive and strictly decreasing at ({i}, {j})",
                    family.label()
                )));
            }
        }
    }
    Ok(())
}

/// Entropic transport rewards `a x - eta x ln x`: `F(t) = exp((a - t)/eta - 1)`.
#[derive(Debug, Clone)]
pub struct EntropicFamily {
    pub weights: Matrix,
    pub eta: f64,
}

impl ConcaveFamily for EntropicFamily {
    fn label(&self) -> &str {
        "entropic"
    }
    fn rows(&self) -> usize {
        self.weights.nrows()
    }
    fn cols(&self) -> usize {
        self.weights.ncols()
    }
    fn inverse_marginal(&self, i: usize, j: usize, t: f64) -> f64 {
        ((self.weights[(i, j)] - t) / self.eta - 1.0).exp()
    }
}

/// Isoelastic allocation rewards written additively: `F(t) = (b e^{-t})^{1/eta}`,
/// so that `alpha = e^{-lambda}` and `beta = e^{mu}`.
#[derive(Debug, Clone)]
pub struct IsoelasticFamily {
    pub coefficients: Matrix,
    pub eta: f64,
}

impl ConcaveFamily for IsoelasticFamily {
    fn label(&self) -> &str {
        "isoelastic"
    }
    fn rows(&self) -> usize {
        self.coefficients.nrows()
    }
    fn cols(&self) -> usize {
        self.coefficients.ncols()
    }
    fn inverse_marginal(&self, i: usize, j: usize, t: f64) -> f64 {
        ((self.coefficients[(i, j)].ln() - t) / self.eta).exp()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConcaveParams {
    /// Stop once both marginal residuals (infinity norm) fall to this level.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Absolute tolerance of each scalar root solve.
    pub root_tol: f64,
}

impl Default for ConcaveParams {
    fn default() -> Self {
        ConcaveParams {
            tol: 1e-10,
            max_sweeps: 10_000,
            root_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConcaveRun {
    pub duals: DualPotentials,
    pub plan: Matrix,
    /// Plan after each sweep (column solve followed by row solve).
    pub trace: Vec<Matrix>,
    pub sweeps: usize,
}

/// Solves `sum_k F(base_k + x) = target` for `x`; the left side is strictly
/// decreasing in `x`.
fn solve_monotone(
    f: impl Fn(f64) -> f64,
    target: f64,
    start: f64,
    step: f64,
    tol: f64,
) -> Option<f64> {
    let g = |x: f64| f(x) - target;
    let (mut lo, mut hi);
    let g0 = g(start);
    if g0 == 0.0 {
        return Some(start);
    }
    let mut width = step;
    if g0 > 0.0 {
        lo = start;
        hi = start + width;
        let mut tries = 0;
        while g(hi) > 0.0 {
            lo = hi;
            width *= 2.0;
            hi = start + width;
            tries += 1;
            if tries > 200 || !hi.is_finite() {
                return None;
            }
        }
    } else {
        hi = start;
        lo = start - width;
        let mut tries = 0;
        while g(lo) < 0.0 {
            hi = lo;
            width *= 2.0;
            lo = start - width;
            tries += 1;
            if tries > 200 || !lo.is_finite() {
                return None;
            }
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            return Some(mid);
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Alternates the column equations `sum_i F_ij(lambda_i + mu_j) = c_j` and
/// the row equations `sum_j F_ij(lambda_i + mu_j) = r_i`, each solved one
/// multiplier at a time.
pub fn concave_iteration(
    family: &dyn ConcaveFamily,
    r: &[f64],
    c: &[f64],
    lambda0: &[f64],
    params: &ConcaveParams,
) -> Result<ConcaveRun> {
    validate_family(family)?;
    let (n, m) = (family.rows(), family.cols());
    if r.len() != n || c.len() != m || lambda0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "marginals or initial multipliers",
            expected: n,
            got: r.len(),
        });
    }
    let mut lambda = lambda0.to_vec();
    let mut mu = vec![0.0; m];
    let step = family.bracket_step();
    let plan_of = |lambda: &[f64], mu: &[f64]| {
        Matrix::from_shape_fn((n, m), |(i, j)| {
            family.inverse_marginal(i, j, lambda[i] + mu[j])
        })
    };
    let mut trace = Vec::new();
    for sweep in 1..=params.max_sweeps {
        for j in 0..m {
            mu[j] = solve_monotone(
                |x| {
                    (0..n)
                        .map(|i| family.inverse_marginal(i, j, lambda[i] + x))
                        .sum()
                },
                c[j],
                mu[j],
                step,
                params.root_tol,
            )
            .ok_or(Error::RootBracketFailure {
                what: "column",
                index: j,
            })?;
        }
        for i in 0..n {
            lambda[i] = solve_monotone(
                |x| {
                    (0..m)
                        .map(|j| family.inverse_marginal(i, j, x + mu[j]))
                        .sum()
                },
                r[i],
                lambda[i],
                step,
                params.root_tol,
            )
            .ok_or(Error::RootBracketFailure {
                what: "row",
                index: i,
            })?;
        }
        let plan = plan_of(&lambda, &mu);
        let col_err = col_sums(&plan)
            .iter()
            .zip(c)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max);
        let row_err = row_sums(&plan)
            .iter()
            .zip(r)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max);
        trace.push(plan.clone());
        if col_err.max(row_err) <= params.tol {
            return Ok(ConcaveRun {
                duals: DualPotentials { lambda, mu },
                plan,
                trace,
                sweeps: sweep,
            });
        }
    }
    Err(Error::MaxItersExceeded(params.max_sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn scalar_nonreg_step() {
        let (a, b) = nonreg_step(&[1.0], &array![[3.7]]).unwrap();
        assert_eq!(b, vec![3.7]);
        assert_eq!(a, vec![1.0]);
    }

    #[test]
    fn symmetric_nonreg_fixed_point() {
        let (a, b) = nonreg_step(&[1.0, 1.0], &array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert_eq!(b, vec![2.0, 2.0]);
        assert_eq!(a, vec![1.0, 1.0]);
    }

    #[test]
    fn largest_scale_below_is_tight() {
        for &(t, b) in &[(1.0, 3.0), (0.7, 1.9), (2.5e-3, 7.1e4), (1.0, 1.0)] {
            let v = largest_scale_below(t, b);
            assert!(v * b <= t);
            assert!(v.next_up() * b > t);
        }
    }

    #[test]
    fn nonreg_rejects_bad_input() {
        assert!(nonreg_step(&[1.0], &array![[0.0]]).is_err());
        assert!(nonreg_step(&[1.0, 1.0], &array![[1.0]]).is_err());
        assert!(nonreg_step(&[-1.0], &array![[1.0]]).is_err());
    }

    #[test]
    fn fixed_point_report_flags() {
        let rep = fixed_point_report(&[1.0, 2.0], &[1.0, 2.0 + 1e-9], 1e-6);
        assert!(rep.is_fixed_point);
        let rep = fixed_point_report(&[1.0, 2.0], &[2.0, 4.0], 1e-6);
        assert!(!rep.is_fixed_point);
        assert_eq!(rep.theta, 2.0);
    }

    #[test]
    fn ipfp_product_coupling_is_fixed() {
        let r = [0.3, 0.7];
        let c = [0.5, 0.25, 0.25];
        let x0 = Matrix::from_shape_fn((2, 3), |(i, j)| r[i] * c[j]);
        let seq = ipfp_vector(&x0, &[1.0, 1.0], &r, &c, 1).unwrap();
        for v in seq[0].u.iter().chain(&seq[0].v) {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ipfp_symmetric_two_by_two() {
        let x0 = Matrix::from_elem((2, 2), 1.0);
        let seq = ipfp_vector(&x0, &[1.0, 1.0], &[0.5, 0.5], &[0.5, 0.5], 1).unwrap();
        for v in seq[0].x.iter() {
            assert!((v - 0.25).abs() < 1e-16);
        }
        let run = ipfp_matrix(&x0, &[0.5, 0.5], &[0.5, 0.5], &IpfpOptions::default()).unwrap();
        assert_eq!(run.status, IpfpStatus::Converged);
        assert_eq!(run.iterations, 1);
    }

    #[test]
    fn ipfp_matrix_feasible_start_needs_no_steps() {
        let x0 = array![[0.0, 0.25, 0.0], [0.0, 0.05, 0.2], [0.2, 0.3, 0.0]];
        let run = ipfp_matrix(
            &x0,
            &[0.25, 0.25, 0.5],
            &[0.2, 0.6, 0.2],
            &IpfpOptions::default(),
        )
        .unwrap();
        assert_eq!(run.status, IpfpStatus::Converged);
        assert_eq!(run.iterations, 0);
    }

    #[test]
    fn ipfp_matrix_rejects_zero_lines() {
        let x0 = array![[0.0, 0.0], [1.0, 1.0]];
        assert!(matches!(
            ipfp_matrix(&x0, &[1.0, 1.0], &[1.0, 1.0], &IpfpOptions::default()),
            Err(Error::ZeroLine {
                what: "row",
                index: 0
            })
        ));
        let x0 = array![[0.0, 1.0], [0.0, 1.0]];
        assert!(matches!(
            ipfp_matrix(&x0, &[1.0, 1.0], &[1.0, 1.0], &IpfpOptions::default()),
            Err(Error::ZeroLine {
                what: "column",
                index: 0
            })
        ));
    }

    #[test]
    fn ipfp_vector_flags_underflowed_denominators() {
        let x0 = array![[1e-300, 1.0], [1e-300, 1.0]];
        let err = ipfp_vector(&x0, &[1e-30, 1e-30], &[1.0, 1.0], &[1.0, 1.0], 1);
        assert!(matches!(
            err,
            Err(Error::DivisionDegeneracy {
                what: "column",
                index: 0
            })
        ));
    }

    #[test]
    fn concave_scalar_case() {
        let fam = EntropicFamily {
            weights: array![[0.4]],
            eta: 0.5,
        };
        let run =
            concave_iteration(&fam, &[0.8], &[0.8], &[0.0], &ConcaveParams::default()).unwrap();
        assert!((run.plan[(0, 0)] - 0.8).abs() < 1e-12);
        assert_eq!(run.sweeps, 1);
    }

    #[test]
    fn family_validation_catches_increasing_functions() {
        struct Bad;
        impl ConcaveFamily for Bad {
            fn label(&self) -> &str {
                "bad"
            }
            fn rows(&self) -> usize {
                1
            }
            fn cols(&self) -> usize {
                1
            }
            fn inverse_marginal(&self, _: usize, _: usize, t: f64) -> f64 {
                t.exp()
            }
        }
        assert!(validate_family(&Bad).is_err());
    }

    #[test]
    fn monotone_root_solver() {
        let x = solve_monotone(|x| (-x).exp(), 0.5, 10.0, 1.0, 1e-13).unwrap();
        assert!((x - std::f64::consts::LN_2).abs() < 1e-12);
        let x = solve_monotone(|x| (-x).exp(), 0.5, -10.0, 1.0, 1e-13).unwrap();
        assert!((x - std::f64::consts::LN_2).abs() < 1e-12);
    }
}
