//! Isoelastic-regularized scaling iteration.
//!
//! The iteration works on `z_ij = alpha_i b_ij / beta_j` with `b = exp(a)`;
//! the plan is `x_ij = z_ij^(1/eta)`. Each step rescales columns and then
//! rows so that the `1/eta`-norms of the lines of `z` equal `c^eta` and
//! `r^eta`. Norms are evaluated in max-factored form, so no intermediate
//! becomes larger than the largest entry times the line length, and tiny
//! temperatures do not overflow the way `b^(1/eta)` would.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classic::{check_positive_matrix, nonreg_step};
use crate::error::{Error, Result};
use crate::model::{ot_to_moma, Matrix, MomaProblem, OtProblem, Scalings, Sense, TransportPlan};

/// Smallest temperature accepted anywhere in the solver.
pub const ETA_FLOOR: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegParams {
    pub eta: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl RegParams {
    pub fn new(eta: f64, tol: f64, max_iters: usize) -> Result<Self> {
        let p = RegParams {
            eta,
            tol,
            max_iters,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_eta(self.eta)?;
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta >= ETA_FLOOR && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eta must be at least the floor {ETA_FLOOR:e}, got {eta}"
        )));
    }
    Ok(())
}

/// `||v||_p` as `M (sum (v_i/M)^p)^(1/p)` with `M = max v_i`; plain sums when
/// `p == 1`. Entries must be nonnegative. Summation runs in index order.
pub fn max_factored_norm<'a>(values: impl Iterator<Item = &'a f64> + Clone, p: f64) -> f64 {
    if p == 1.0 {
        return values.sum();
    }
    let max = values.clone().fold(0.0f64, |m, &v| m.max(v));
    if max == 0.0 {
        return 0.0;
    }
    let sum: f64 = values.map(|&v| (v / max).powf(p)).sum();
    max * sum.powf(1.0 / p)
}

/// Positive matrix `z` at temperature `eta`, after `iteration` full steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ZState {
    pub z: Matrix,
    pub eta: f64,
    pub iteration: usize,
}

impl ZState {
    pub fn new(z: Matrix, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        check_positive_matrix(&z)?;
        Ok(ZState {
            z,
            eta,
            iteration: 0,
        })
    }

    /// `x_ij = z_ij^(1/eta)`.
    pub fn plan(&self) -> Matrix {
        extract_plan(&self.z, self.eta)
    }
}

pub fn extract_plan(z: &Matrix, eta: f64) -> Matrix {
    let p = 1.0 / eta;
    if p == 1.0 {
        z.clone()
    } else {
        z.mapv(|v| v.powf(p))
    }
}

/// Column multipliers `s` (applied first) and row multipliers `t` of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMultipliers {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
}

/// `s_j = c_j^eta / ||z_.j||_(1/eta)`.
fn column_multipliers(z: &Matrix, c_pow: &[f64], p: f64) -> Vec<f64> {
    (0..z.ncols())
        .map(|j| c_pow[j] / max_factored_norm(z.column(j).iter(), p))
        .collect()
}

/// `t_i = r_i^eta / ||z_i.||_(1/eta)`.
fn row_multipliers(z: &Matrix, r_pow: &[f64], p: f64) -> Vec<f64> {
    z.rows()
        .into_iter()
        .zip(r_pow)
        .map(|(row, rp)| rp / max_factored_norm(row.iter(), p))
        .collect()
}

fn scale_columns(z: &mut Matrix, s: &[f64]) {
    for mut row in z.rows_mut() {
        for (v, f) in row.iter_mut().zip(s) {
            *v *= f;
        }
    }
}

fn scale_rows(z: &mut Matrix, t: &[f64]) {
    for (mut row, f) in z.rows_mut().into_iter().zip(t) {
        row.iter_mut().for_each(|v| *v *= f);
    }
}

fn powered(v: &[f64], eta: f64) -> Vec<f64> {
    v.iter().map(|x| x.powf(eta)).collect()
}

/// Rejects temperatures at which `v^eta` has collapsed to one for some
/// marginal that is not itself one.
fn check_power_collapse(r: &[f64], c: &[f64], eta: f64) -> Result<()> {
    if r.iter().chain(c).any(|&v| v != 1.0 && v.powf(eta) == 1.0) {
        return Err(Error::NumericalDegeneracy(format!(
            "marginal powers collapse to 1 at eta = {eta:e}"
        )));
    }
    Ok(())
}

fn check_multipliers(m: &[f64], iteration: usize) -> Result<()> {
    if m.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::NonFinite { iteration });
    }
    Ok(())
}

/// One full step: columns, then rows.
pub fn z_step(state: &ZState, r: &[f64], c: &[f64]) -> Result<(ZState, StepMultipliers)> {
    let (n, m) = state.z.dim();
    if r.len() != n || c.len() != m {
        return Err(Error::DimensionMismatch {
            what: "marginals",
            expected: n + m,
            got: r.len() + c.len(),
        });
    }
    check_power_collapse(r, c, state.eta)?;
    let p = 1.0 / state.eta;
    let mut z = state.z.clone();
    let s = column_multipliers(&z, &powered(c, state.eta), p);
    check_multipliers(&s, state.iteration + 1)?;
    scale_columns(&mut z, &s);
    let t = row_multipliers(&z, &powered(r, state.eta), p);
    check_multipliers(&t, state.iteration + 1)?;
    scale_rows(&mut z, &t);
    Ok((
        ZState {
            z,
            eta: state.eta,
            iteration: state.iteration + 1,
        },
        StepMultipliers { s, t },
    ))
}

/// `(1/eta) ln(max s / min s)`: the Hilbert distance between the column
/// sums of the plan the multipliers were computed from and `c`.
pub fn criterion(s: &[f64], eta: f64) -> f64 {
    let max = s.iter().copied().fold(f64::MIN, f64::max);
    let min = s.iter().copied().fold(f64::MAX, f64::min);
    (max / min).ln() / eta
}

/// Row scaling after which every row holds a column-maximal entry:
/// `alpha_i = min_j (max_k b_kj) / b_ij`, `b^_ij = alpha_i b_ij`.
pub fn row_equilibrate(b: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let ones = vec![1.0; b.nrows()];
    let (alpha, _) = nonreg_step(&ones, b)?;
    let mut scaled = b.clone();
    scale_rows(&mut scaled, &alpha);
    Ok((scaled, alpha))
}

/// The weight map of the regularized allocation problem:
/// `beta_j = ||alpha . b_.j||_(1/eta) / c_j^eta`,
/// `alpha^_i = r_i^eta / ||b_i. / beta||_(1/eta)`.
pub fn phi_eta_step(
    alpha: &[f64],
    problem: &MomaProblem,
    eta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_eta(eta)?;
    let b = &problem.coefficients;
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
    let (r, c) = (&problem.row_marginals, &problem.col_marginals);
    check_power_collapse(r, c, eta)?;
    let p = 1.0 / eta;
    let beta: Vec<f64> = (0..b.ncols())
        .map(|j| {
            let col: Vec<f64> = (0..b.nrows()).map(|i| alpha[i] * b[(i, j)]).collect();
            max_factored_norm(col.iter(), p) / c[j].powf(eta)
        })
        .collect();
    let alpha_hat: Vec<f64> = b
        .rows()
        .into_iter()
        .zip(r)
        .map(|(row, ri)| {
            let v: Vec<f64> = row.iter().zip(&beta).map(|(b, be)| b / be).collect();
            ri.powf(eta) / max_factored_norm(v.iter(), p)
        })
        .collect();
    check_multipliers(&beta, 1)?;
    check_multipliers(&alpha_hat, 1)?;
    Ok((alpha_hat, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub eta: f64,
    pub tol: f64,
}

/// Stages with strictly decreasing temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    stages: Vec<Stage>,
}

impl AnnealingSchedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::InvalidParameter("schedule has no stages".into()));
        }
        for st in &stages {
            RegParams::new(st.eta, st.tol, 1)?;
        }
        if stages.windows(2).any(|w| !(w[1].eta < w[0].eta)) {
            return Err(Error::InvalidParameter(
                "stage temperatures must be strictly decreasing".into(),
            ));
        }
        Ok(AnnealingSchedule { stages })
    }

    pub fn single(eta: f64, tol: f64) -> Result<Self> {
        Self::new(vec![Stage { eta, tol }])
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn final_eta(&self) -> f64 {
        self.stages[self.stages.len() - 1].eta
    }

    /// Replaces the tolerance of the last stage.
    pub fn with_final_tol(mut self, tol: f64) -> Result<Self> {
        let last = self.stages.len() - 1;
        self.stages[last].tol = tol;
        Self::new(self.stages)
    }
}

/// Stage `k` of `stages` runs at `eta_final * factor^(stages - 1 - k)`.
pub fn make_schedule(
    eta_final: f64,
    stages: usize,
    factor: f64,
    tol: f64,
) -> Result<AnnealingSchedule> {
    check_eta(eta_final)?;
    if stages == 0 {
        return Err(Error::InvalidParameter(
            "at least one stage is required".into(),
        ));
    }
    if !(factor > 1.0 && factor.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "reduction factor must exceed 1, got {factor}"
        )));
    }
    let stages = (0..stages)
        .map(|k| Stage {
            eta: eta_final * factor.powi((stages - 1 - k) as i32),
            tol,
        })
        .collect();
    AnnealingSchedule::new(stages)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Global full-step counter across all stages, starting at 1.
    pub k: usize,
    pub eta: f64,
    /// Criterion of the plan after step `k`.
    pub criterion: f64,
    /// Seconds since the solve started.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    /// `(k, plan after step k)` at the configured stride.
    pub snapshots: Vec<(usize, Matrix)>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iters_per_stage: usize,
    pub snapshot_stride: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters_per_stage: DEFAULT_MAX_ITERS,
            snapshot_stride: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub eta: f64,
    pub tol: f64,
    pub iterations: usize,
    pub final_criterion: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub plan: TransportPlan,
    /// Cumulative scalings: `x_ij = (alpha_i b_ij / beta_j)^(1/eta)`.
    pub scalings: Scalings,
    pub trace: ConvergenceTrace,
    pub stages: Vec<StageSummary>,
    /// False when some stage stopped at its iteration limit; the state kept
    /// for that stage is its lowest-criterion iterate.
    pub converged: bool,
    pub state: ZState,
}

impl SolveOutput {
    pub fn iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }

    pub fn final_criterion(&self) -> f64 {
        self.stages.last().map_or(f64::NAN, |s| s.final_criterion)
    }
}

struct Incumbent {
    z: Matrix,
    log_alpha: Vec<f64>,
    log_beta: Vec<f64>,
    criterion: f64,
}

/// Runs the staged iteration on a transport problem.
///
/// `b = exp(a)` (negated weights for minimization), rows are equilibrated,
/// and `z` starts at the equilibrated matrix. Each stage iterates full steps
/// until the criterion of the current plan drops below the stage tolerance;
/// at least one step is taken per stage. `z` carries over between stages
/// unchanged, which keeps the scalings and re-sharpens the plan to the new
/// temperature.
pub fn solve(
    problem: &OtProblem,
    schedule: &AnnealingSchedule,
    options: &SolveOptions,
) -> Result<SolveOutput> {
    problem.validate()?;
    if options.max_iters_per_stage == 0 {
        return Err(Error::InvalidParameter(
            "max_iters must be at least 1".into(),
        ));
    }
    let oriented = match problem.sense {
        Sense::Maximize => problem.clone(),
        Sense::Minimize => OtProblem {
            weights: problem.weights.mapv(|a| -a),
            sense: Sense::Maximize,
            ..problem.clone()
        },
    };
    let b = ot_to_moma(&oriented)?.coefficients;
    let (r, c) = (&problem.row_marginals, &problem.col_marginals);
    let (mut z, eq_alpha) = row_equilibrate(&b)?;
    let mut log_alpha: Vec<f64> = eq_alpha.iter().map(|a| a.ln()).collect();
    let mut log_beta = vec![0.0; c.len()];

    let start = Instant::now();
    let mut trace = ConvergenceTrace::default();
    let mut summaries = Vec::with_capacity(schedule.stages().len());
    let mut k_global = 0usize;
    let mut all_converged = true;

    for stage in schedule.stages() {
        let eta = stage.eta;
        check_power_collapse(r, c, eta)?;
        let p = 1.0 / eta;
        let (r_pow, c_pow) = (powered(r, eta), powered(c, eta));
        let mut best: Option<Incumbent> = None;
        let mut iters = 0usize;
        let mut converged = false;
        let mut last_criterion = f64::NAN;

        loop {
            let s = column_multipliers(&z, &c_pow, p);
            check_multipliers(&s, k_global + 1)?;
            if iters > 0 {
                let crit = criterion(&s, eta);
                last_criterion = crit;
                trace.records.push(TraceRecord {
                    k: k_global,
                    eta,
                    criterion: crit,
                    wall_time: start.elapsed().as_secs_f64(),
                });
                if crit < stage.tol {
                    converged = true;
                    break;
                }
                if best.as_ref().is_none_or(|b| crit < b.criterion) {
                    best = Some(Incumbent {
                        z: z.clone(),
                        log_alpha: log_alpha.clone(),
                        log_beta: log_beta.clone(),
                        criterion: crit,
                    });
                }
                if iters >= options.max_iters_per_stage {
                    break;
                }
            }
            let before = z.clone();
            scale_columns(&mut z, &s);
            let t = row_multipliers(&z, &r_pow, p);
            check_multipliers(&t, k_global + 1)?;
            scale_rows(&mut z, &t);
            for (la, ti) in log_alpha.iter_mut().zip(&t) {
                *la += ti.ln();
            }
            for (lb, sj) in log_beta.iter_mut().zip(&s) {
                *lb -= sj.ln();
            }
            iters += 1;
            k_global += 1;
            if z.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::NonFinite {
                    iteration: k_global,
                });
            }
            if iters > 1 && z == before {
                return Err(Error::NumericalDegeneracy(format!(
                    "iteration stalled at eta = {eta:e} with criterion {last_criterion:e} above tolerance"
                )));
            }
            if let Some(stride) = options.snapshot_stride {
                if stride > 0 && k_global.is_multiple_of(stride) {
                    trace.snapshots.push((k_global, extract_plan(&z, eta)));
                }
            }
        }

        if !converged {
            all_converged = false;
            if let Some(inc) = best {
                z = inc.z;
                log_alpha = inc.log_alpha;
                log_beta = inc.log_beta;
                last_criterion = inc.criterion;
            }
        }
        summaries.push(StageSummary {
            eta,
            tol: stage.tol,
            iterations: iters,
            final_criterion: last_criterion,
            converged,
        });
    }

    let eta = schedule.final_eta();
    let plan = TransportPlan::for_problem(extract_plan(&z, eta), problem)?;
    Ok(SolveOutput {
        plan,
        scalings: Scalings {
            alpha: log_alpha.iter().map(|v| v.exp()).collect(),
            beta: log_beta.iter().map(|v| v.exp()).collect(),
        },
        trace,
        stages: summaries,
        converged: all_converged,
        state: ZState {
            z,
            eta,
            iteration: k_global,
        },
    })
}

/// Isoelastic utility `x^(1-eta) / (1-eta)` (logarithmic at `eta = 1`).
pub fn isoelastic_utility(x: f64, eta: f64) -> f64 {
    if eta == 1.0 {
        x.ln()
    } else {
        x.powf(1.0 - eta) / (1.0 - eta)
    }
}

/// `-g''(x) / g'(x)` by central differences with step `h`.
pub fn arrow_pratt_fd(g: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d1 = (g(x + h) - g(x - h)) / (2.0 * h);
    let d2 = (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
    -d2 / d1
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn reference_problem() -> OtProblem {
        OtProblem::new(
            array![[0.0, 1.0, 0.5], [0.7, 0.5, 0.3], [0.6, 0.3, 0.0]],
            vec![0.25, 0.25, 0.5],
            vec![0.2, 0.6, 0.2],
            Sense::Maximize,
        )
        .unwrap()
    }

    #[test]
    fn norm_matches_naive_and_survives_huge_p() {
        let v = [0.5, 1.5, 2.0];
        let naive = v
            .iter()
            .map(|x: &f64| x.powf(3.0))
            .sum::<f64>()
            .powf(1.0 / 3.0);
        assert!((max_factored_norm(v.iter(), 3.0) - naive).abs() < 1e-14);
        assert_eq!(max_factored_norm(v.iter(), 1.0), 4.0);
        // Naively 2^1e6 overflows.
        let big = max_factored_norm(v.iter(), 1e6);
        assert!((big - 2.0).abs() < 1e-12);
        assert_eq!(max_factored_norm([0.0, 0.0].iter(), 5.0), 0.0);
    }

    #[test]
    fn equilibration_examples() {
        let (b, a) = row_equilibrate(&Matrix::from_elem((2, 3), 2.5)).unwrap();
        assert_eq!(a, vec![1.0, 1.0]);
        assert_eq!(b, Matrix::from_elem((2, 3), 2.5));

        let b0 = array![[1.0, 2.0], [2.0, 1.0]];
        let (_, a) = row_equilibrate(&b0).unwrap();
        assert_eq!(a, vec![1.0, 1.0]);

        let b = ot_to_moma(&reference_problem()).unwrap().coefficients;
        let (bh, a) = row_equilibrate(&b).unwrap();
        assert_eq!(a[0], 1.0);
        assert_eq!(a[1], 1.0);
        assert!((a[2] - 0.1f64.exp()).abs() < 1e-15);
        for j in 0..3 {
            let before = (0..3).map(|i| b[(i, j)]).fold(0.0, f64::max);
            let after = (0..3).map(|i| bh[(i, j)]).fold(0.0, f64::max);
            assert_eq!(before, after);
        }
        assert!(row_equilibrate(&array![[1.0, 0.0]]).is_err());
    }

    #[test]
    fn phi_scalar_case_is_fixed() {
        let p = MomaProblem::new(array![[1.0]], vec![1.0], vec![1.0], Sense::Maximize).unwrap();
        for a in [0.3, 1.0, 7.0] {
            let (ah, _) = phi_eta_step(&[a], &p, 0.2).unwrap();
            assert!((ah[0] - a).abs() <= 1e-15 * a);
        }
    }

    #[test]
    fn criterion_examples() {
        assert_eq!(criterion(&[1.0, 1.0, 1.0], 0.1), 0.0);
        assert!((criterion(&[2.0, 1.0], 0.5) - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn schedule_construction() {
        let s = make_schedule(0.3, 1, 1.5, 0.01).unwrap();
        assert_eq!(s.stages().len(), 1);
        assert_eq!(s.final_eta(), 0.3);

        let s = make_schedule(1e-4, 12, 1.5, 0.01).unwrap();
        assert!((s.stages()[0].eta - 1e-4 * 1.5f64.powi(11)).abs() < 1e-18);
        assert!((s.stages()[0].eta - 8.6498e-3).abs() < 1e-7);
        assert_eq!(s.final_eta(), 1e-4);
        for w in s.stages().windows(2) {
            assert!((w[0].eta / w[1].eta - 1.5).abs() < 1e-14);
        }
        assert!(make_schedule(1e-9, 3, 1.5, 0.01).is_err());
        assert!(make_schedule(1e-3, 0, 1.5, 0.01).is_err());
        assert!(make_schedule(1e-3, 3, 1.0, 0.01).is_err());
        assert!(AnnealingSchedule::new(vec![
            Stage { eta: 0.1, tol: 0.1 },
            Stage { eta: 0.1, tol: 0.1 }
        ])
        .is_err());
    }

    #[test]
    fn params_respect_floor() {
        assert!(RegParams::new(1e-8, 0.01, 1).is_ok());
        assert!(RegParams::new(0.0, 0.01, 1).is_err());
        assert!(RegParams::new(1e-3, 0.0, 1).is_err());
        assert!(RegParams::new(1e-3, 0.01, 0).is_err());
    }

    #[test]
    fn z_step_at_unit_temperature_is_ipfp() {
        let z0 = array![[0.3, 1.2, 0.7], [2.0, 0.1, 0.9]];
        let r = [0.4, 0.6];
        let c = [0.5, 0.2, 0.3];
        let (next, _) = z_step(&ZState::new(z0.clone(), 1.0).unwrap(), &r, &c).unwrap();
        let mut x = z0.clone();
        let cs = crate::model::col_sums(&x);
        for ((_, j), v) in x.indexed_iter_mut() {
            *v *= c[j] / cs[j];
        }
        let rs = crate::model::row_sums(&x);
        for ((i, _), v) in x.indexed_iter_mut() {
            *v *= r[i] / rs[i];
        }
        for (a, b) in next.z.iter().zip(x.iter()) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn product_coupling_is_a_fixed_point() {
        let r = [0.2, 0.3, 0.5];
        let c = [0.6, 0.4];
        let z = Matrix::from_shape_fn((3, 2), |(i, j)| r[i] * c[j]);
        let (_, mult) = z_step(&ZState::new(z, 1.0).unwrap(), &r, &c).unwrap();
        for v in mult.s.iter().chain(&mult.t) {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn one_by_one_solve() {
        let p = OtProblem::new(array![[0.3]], vec![2.0], vec![2.0], Sense::Maximize).unwrap();
        let out = solve(
            &p,
            &AnnealingSchedule::single(1e-3, 1e-2).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(out.iterations(), 1);
        assert!((out.plan.values[(0, 0)] - 2.0).abs() < 1e-12);
        assert!(out.converged);
    }

    #[test]
    fn single_stage_small_example() {
        let out = solve(
            &reference_problem(),
            &AnnealingSchedule::single(1e-3, 1e-2).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        let want = array![[0.0, 0.25, 0.0], [0.0, 0.05, 0.2], [0.2, 0.3, 0.0]];
        for (a, b) in out.plan.values.iter().zip(want.iter()) {
            assert!((a - b).abs() <= 0.01, "{}", out.plan.values);
        }
    }

    #[test]
    fn iteration_limit_keeps_best_iterate() {
        let opts = SolveOptions {
            max_iters_per_stage: 5,
            snapshot_stride: None,
        };
        let out = solve(
            &reference_problem(),
            &AnnealingSchedule::single(1e-3, 1e-12).unwrap(),
            &opts,
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations(), 5);
        let best = out
            .trace
            .records
            .iter()
            .map(|r| r.criterion)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.final_criterion(), best);
    }

    #[test]
    fn minimization_solves_negated_weights() {
        let mut p = reference_problem();
        p.weights.mapv_inplace(|a| -a);
        p.sense = Sense::Minimize;
        let out = solve(
            &p,
            &AnnealingSchedule::single(1e-3, 1e-2).unwrap(),
            &SolveOptions::default(),
        )
        .unwrap();
        assert!((out.plan.values[(2, 0)] - 0.2).abs() < 0.01);
    }

    #[test]
    fn isoelastic_log_limit() {
        assert_eq!(isoelastic_utility(std::f64::consts::E, 1.0), 1.0);
        assert!((isoelastic_utility(4.0, 0.5) - 4.0).abs() < 1e-15);
    }
}
