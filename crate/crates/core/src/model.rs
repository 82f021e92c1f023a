//! Problem, plan and scaling types, plus the problem-level transforms that
//! relate the additive (transport) and multiplicative (allocation) forms.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Relative slack allowed between the row total and the column total.
pub const FEASIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    pub fn flip(self) -> Sense {
        match self {
            Sense::Maximize => Sense::Minimize,
            Sense::Minimize => Sense::Maximize,
        }
    }

    /// +1 for maximization, -1 for minimization.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Maximize => 1.0,
            Sense::Minimize => -1.0,
        }
    }
}

/// Transport problem in additive form: optimize `sum a_ij x_ij` subject to
/// row sums `r` and column sums `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct OtProblem {
    pub weights: Matrix,
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
    pub sense: Sense,
}

/// Linear allocation problem in multiplicative form: one objective
/// `sum_j b_ij x_ij` per row, with strictly positive coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MomaProblem {
    pub coefficients: Matrix,
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
    pub sense: Sense,
}

impl OtProblem {
    pub fn new(weights: Matrix, r: Vec<f64>, c: Vec<f64>, sense: Sense) -> Result<Self> {
        let p = OtProblem {
            weights,
            row_marginals: r,
            col_marginals: c,
            sense,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn m(&self) -> usize {
        self.weights.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        validate_shape(&self.weights, &self.row_marginals, &self.col_marginals)?;
        check_finite("weight", self.weights.iter())?;
        validate_marginals(&self.row_marginals, &self.col_marginals)
    }

    /// Total mass `sum r` (equal to `sum c` up to the feasibility slack).
    pub fn mass(&self) -> f64 {
        self.row_marginals.iter().sum()
    }
}

impl MomaProblem {
    pub fn new(coefficients: Matrix, r: Vec<f64>, c: Vec<f64>, sense: Sense) -> Result<Self> {
        let p = MomaProblem {
            coefficients,
            row_marginals: r,
            col_marginals: c,
            sense,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn m(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        validate_shape(&self.coefficients, &self.row_marginals, &self.col_marginals)?;
        check_finite("coefficient", self.coefficients.iter())?;
        validate_marginals(&self.row_marginals, &self.col_marginals)?;
        for ((i, j), &b) in self.coefficients.indexed_iter() {
            if b <= 0.0 {
                return Err(Error::NonPositiveCoefficient {
                    row: i,
                    col: j,
                    value: b,
                });
            }
        }
        Ok(())
    }
}

/// Either problem form, for operations that accept both.
#[derive(Debug, Clone, Copy)]
pub enum AnyProblem<'a> {
    Ot(&'a OtProblem),
    Moma(&'a MomaProblem),
}

impl<'a> From<&'a OtProblem> for AnyProblem<'a> {
    fn from(p: &'a OtProblem) -> Self {
        AnyProblem::Ot(p)
    }
}

impl<'a> From<&'a MomaProblem> for AnyProblem<'a> {
    fn from(p: &'a MomaProblem) -> Self {
        AnyProblem::Moma(p)
    }
}

pub fn validate_problem<'a>(problem: impl Into<AnyProblem<'a>>) -> Result<()> {
    match problem.into() {
        AnyProblem::Ot(p) => p.validate(),
        AnyProblem::Moma(p) => p.validate(),
    }
}

fn validate_shape(w: &Matrix, r: &[f64], c: &[f64]) -> Result<()> {
    if r.is_empty() {
        return Err(Error::Empty("no rows"));
    }
    if c.is_empty() {
        return Err(Error::Empty("no columns"));
    }
    if w.nrows() != r.len() {
        return Err(Error::DimensionMismatch {
            what: "weight rows",
            expected: r.len(),
            got: w.nrows(),
        });
    }
    if w.ncols() != c.len() {
        return Err(Error::DimensionMismatch {
            what: "weight columns",
            expected: c.len(),
            got: w.ncols(),
        });
    }
    Ok(())
}

fn check_finite<'a>(what: &'static str, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for (index, v) in values.enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteEntry { what, index });
        }
    }
    Ok(())
}

fn validate_marginals(r: &[f64], c: &[f64]) -> Result<()> {
    check_finite("row marginal", r.iter())?;
    check_finite("column marginal", c.iter())?;
    for (what, v) in [("row", r), ("column", c)] {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| x <= 0.0) {
            return Err(Error::NonPositiveMarginal { what, index, value });
        }
    }
    let row_total: f64 = r.iter().sum();
    let col_total: f64 = c.iter().sum();
    if (row_total - col_total).abs() > FEASIBILITY_TOL * row_total.max(col_total) {
        return Err(Error::GlobalFeasibilityViolation {
            row_total,
            col_total,
        });
    }
    Ok(())
}

/// Nonnegative allocation matrix together with its marginal residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub values: Matrix,
    pub row_residual: f64,
    pub col_residual: f64,
}

impl TransportPlan {
    /// Wraps `values` and computes residuals against `r` and `c`.
    pub fn new(values: Matrix, r: &[f64], c: &[f64]) -> Result<Self> {
        if values.nrows() != r.len() {
            return Err(Error::DimensionMismatch {
                what: "plan rows",
                expected: r.len(),
                got: values.nrows(),
            });
        }
        if values.ncols() != c.len() {
            return Err(Error::DimensionMismatch {
                what: "plan columns",
                expected: c.len(),
                got: values.ncols(),
            });
        }
        check_finite("plan", values.iter())?;
        if let Some(((i, j), &v)) = values.indexed_iter().find(|(_, &v)| v < 0.0) {
            return Err(Error::NegativeEntry {
                row: i,
                col: j,
                value: v,
            });
        }
        let (row_residual, col_residual) = marginal_residuals(&values, r, c);
        Ok(TransportPlan {
            values,
            row_residual,
            col_residual,
        })
    }

    pub fn for_problem(values: Matrix, problem: &OtProblem) -> Result<Self> {
        Self::new(values, &problem.row_marginals, &problem.col_marginals)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        row_sums(&self.values)
    }

    pub fn col_sums(&self) -> Vec<f64> {
        col_sums(&self.values)
    }
}

pub fn row_sums(x: &Matrix) -> Vec<f64> {
    x.rows().into_iter().map(|row| row.iter().sum()).collect()
}

pub fn col_sums(x: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; x.ncols()];
    for row in x.rows() {
        for (acc, v) in out.iter_mut().zip(row) {
            *acc += v;
        }
    }
    out
}

/// `(max_i |sum_j x_ij - r_i|, max_j |sum_i x_ij - c_j|)`.
pub fn marginal_residuals(x: &Matrix, r: &[f64], c: &[f64]) -> (f64, f64) {
    let worst = |sums: Vec<f64>, target: &[f64]| {
        sums.iter()
            .zip(target)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max)
    };
    (worst(row_sums(x), r), worst(col_sums(x), c))
}

/// Multiplicative weights: `alpha` per row, `beta` per column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scalings {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Additive potentials, linked to [`Scalings`] by `lambda = -ln alpha`,
/// `mu = ln beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl Scalings {
    pub fn to_duals(&self) -> DualPotentials {
        DualPotentials {
            lambda: self.alpha.iter().map(|a| -a.ln()).collect(),
            mu: self.beta.iter().map(|b| b.ln()).collect(),
        }
    }
}

impl DualPotentials {
    pub fn to_scalings(&self) -> Scalings {
        Scalings {
            alpha: self.lambda.iter().map(|l| (-l).exp()).collect(),
            beta: self.mu.iter().map(|m| m.exp()).collect(),
        }
    }

    /// `sum lambda_i r_i + sum mu_j c_j`.
    pub fn value(&self, r: &[f64], c: &[f64]) -> f64 {
        dot(&self.lambda, r) + dot(&self.mu, c)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row weights `p`, column weights `q` and an overall scale `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub row_weights: Vec<f64>,
    pub col_weights: Vec<f64>,
    pub scale: f64,
}

impl TransformSpec {
    pub fn identity(n: usize, m: usize) -> Self {
        TransformSpec {
            row_weights: vec![1.0; n],
            col_weights: vec![1.0; m],
            scale: 1.0,
        }
    }

    pub fn reciprocal(&self) -> Self {
        TransformSpec {
            row_weights: self.row_weights.iter().map(|p| 1.0 / p).collect(),
            col_weights: self.col_weights.iter().map(|q| 1.0 / q).collect(),
            scale: 1.0 / self.scale,
        }
    }

    fn validate(&self) -> Result<()> {
        for (what, v) in [("row", &self.row_weights), ("column", &self.col_weights)] {
            if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
                return Err(Error::NonPositiveWeight { what, index, value });
            }
        }
        if !(self.scale > 0.0) {
            return Err(Error::NonPositiveWeight {
                what: "scale",
                index: 0,
                value: self.scale,
            });
        }
        Ok(())
    }

    /// `x~_ij = p_i q_j x_ij`.
    pub fn forward_plan(&self, x: &Matrix) -> Matrix {
        Matrix::from_shape_fn(x.dim(), |(i, j)| {
            self.row_weights[i] * self.col_weights[j] * x[(i, j)]
        })
    }

    /// `x_ij = x~_ij / (p_i q_j)`.
    pub fn backward_plan(&self, x: &Matrix) -> Matrix {
        Matrix::from_shape_fn(x.dim(), |(i, j)| {
            x[(i, j)] / (self.row_weights[i] * self.col_weights[j])
        })
    }
}

/// Per-row objective values, the transport objective, and the dual value when
/// potentials are supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveReport {
    pub per_row_values: Vec<f64>,
    pub total_ot_value: f64,
    pub dual_value: Option<f64>,
}

pub fn objective_report(
    problem: &OtProblem,
    plan: &Matrix,
    duals: Option<&DualPotentials>,
) -> ObjectiveReport {
    let per_row_values = problem
        .weights
        .rows()
        .into_iter()
        .zip(plan.rows())
        .map(|(a, x)| a.iter().zip(x).map(|(a, x)| a.exp() * x).sum())
        .collect();
    ObjectiveReport {
        per_row_values,
        total_ot_value: ot_objective(&problem.weights, plan),
        dual_value: duals.map(|d| d.value(&problem.row_marginals, &problem.col_marginals)),
    }
}

/// `sum_ij a_ij x_ij`.
pub fn ot_objective(weights: &Matrix, plan: &Matrix) -> f64 {
    weights.iter().zip(plan).map(|(a, x)| a * x).sum()
}

/// `b_ij = exp(a_ij)`; fails instead of saturating to infinity or zero.
pub fn ot_to_moma(problem: &OtProblem) -> Result<MomaProblem> {
    let mut b = problem.weights.clone();
    for ((i, j), v) in b.indexed_iter_mut() {
        let e = v.exp();
        if !e.is_finite() || e == 0.0 {
            return Err(Error::Overflow {
                row: i,
                col: j,
                value: *v,
            });
        }
        *v = e;
    }
    Ok(MomaProblem {
        coefficients: b,
        row_marginals: problem.row_marginals.clone(),
        col_marginals: problem.col_marginals.clone(),
        sense: problem.sense,
    })
}

/// `a_ij = ln b_ij`.
pub fn moma_to_ot(problem: &MomaProblem) -> Result<OtProblem> {
    let mut a = problem.coefficients.clone();
    for ((i, j), v) in a.indexed_iter_mut() {
        if !(*v > 0.0) {
            return Err(Error::NonPositiveCoefficient {
                row: i,
                col: j,
                value: *v,
            });
        }
        *v = v.ln();
    }
    Ok(OtProblem {
        weights: a,
        row_marginals: problem.row_marginals.clone(),
        col_marginals: problem.col_marginals.clone(),
        sense: problem.sense,
    })
}

/// Turns a problem with weighted sums `sum_i p_i x_ij = c_j`,
/// `sum_j q_j x_ij = r_i` into the equivalent unweighted one.
pub fn unweight(problem: &MomaProblem, spec: &TransformSpec) -> Result<MomaProblem> {
    spec.validate()?;
    if spec.row_weights.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            what: "row weights",
            expected: problem.n(),
            got: spec.row_weights.len(),
        });
    }
    if spec.col_weights.len() != problem.m() {
        return Err(Error::DimensionMismatch {
            what: "column weights",
            expected: problem.m(),
            got: spec.col_weights.len(),
        });
    }
    let (p, q) = (&spec.row_weights, &spec.col_weights);
    Ok(MomaProblem {
        coefficients: Matrix::from_shape_fn(problem.coefficients.dim(), |(i, j)| {
            problem.coefficients[(i, j)] / (p[i] * q[j])
        }),
        row_marginals: problem
            .row_marginals
            .iter()
            .zip(p)
            .map(|(r, p)| r * p)
            .collect(),
        col_marginals: problem
            .col_marginals
            .iter()
            .zip(q)
            .map(|(c, q)| c * q)
            .collect(),
        sense: problem.sense,
    })
}

/// Reciprocal coefficients with the sense flipped; balanced solutions are
/// shared between input and output.
pub fn conjugate_linear(problem: &MomaProblem) -> Result<MomaProblem> {
    problem.validate()?;
    Ok(MomaProblem {
        coefficients: problem.coefficients.mapv(|b| 1.0 / b),
        row_marginals: problem.row_marginals.clone(),
        col_marginals: problem.col_marginals.clone(),
        sense: problem.sense.flip(),
    })
}

/// Divides the marginals by `s`; the reward `b x` becomes `b (s x)`.
pub fn rescale(problem: &MomaProblem, s: f64) -> Result<MomaProblem> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::NonPositiveScale(s));
    }
    Ok(MomaProblem {
        coefficients: problem.coefficients.mapv(|b| b * s),
        row_marginals: problem.row_marginals.iter().map(|r| r / s).collect(),
        col_marginals: problem.col_marginals.iter().map(|c| c / s).collect(),
        sense: problem.sense,
    })
}

/// Outcome of a Monge-property scan. Indices in `violation` are 0-based
/// `(i1, i2, j1, j2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MongeReport {
    pub holds: bool,
    pub violation: Option<(usize, usize, usize, usize)>,
}

/// Checks `a[i1][j1] + a[i2][j2] >= a[i1][j2] + a[i2][j1]` for all
/// `i1 < i2`, `j1 < j2` with exact comparison. For minimization the
/// inequality is reversed.
pub fn monge_check(problem: &OtProblem) -> MongeReport {
    let a = &problem.weights;
    let sign = problem.sense.sign();
    scan_minors(a.nrows(), a.ncols(), |i1, i2, j1, j2| {
        sign * (a[(i1, j1)] + a[(i2, j2)]) >= sign * (a[(i1, j2)] + a[(i2, j1)])
    })
}

/// Multiplicative counterpart: every 2x2 determinant of `b` is nonnegative.
pub fn monge_check_moma(problem: &MomaProblem) -> MongeReport {
    let b = &problem.coefficients;
    let sign = problem.sense.sign();
    scan_minors(b.nrows(), b.ncols(), |i1, i2, j1, j2| {
        sign * (b[(i1, j1)] * b[(i2, j2)]) >= sign * (b[(i1, j2)] * b[(i2, j1)])
    })
}

fn scan_minors(n: usize, m: usize, ok: impl Fn(usize, usize, usize, usize) -> bool) -> MongeReport {
    for i1 in 0..n {
        for i2 in i1 + 1..n {
            for j1 in 0..m {
                for j2 in j1 + 1..m {
                    if !ok(i1, i2, j1, j2) {
                        return MongeReport {
                            holds: false,
                            violation: Some((i1, i2, j1, j2)),
                        };
                    }
                }
            }
        }
    }
    MongeReport {
        holds: true,
        violation: None,
    }
}
