//! Exact reference solutions: a transportation simplex and the northwest
//! corner rule.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::model::{ot_objective, DualPotentials, Matrix, OtProblem, Sense, TransportPlan};

/// Default cap on `n * m` for the simplex oracle.
pub const DEFAULT_ORACLE_CELLS: usize = 10_000;
/// Environment variable that overrides [`DEFAULT_ORACLE_CELLS`].
pub const ORACLE_CELLS_ENV: &str = "BT_MAX_ORACLE_CELLS";
/// A nonbasic cell enters when its reduced cost exceeds this.
pub const REDUCED_COST_TOL: f64 = 1e-11;
/// Margin on nonbasic reduced costs required to call the optimum unique.
pub const UNIQUENESS_MARGIN: f64 = 1e-9;

pub fn oracle_cell_limit() -> usize {
    std::env::var(ORACLE_CELLS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_ORACLE_CELLS)
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub plan: TransportPlan,
    pub objective: f64,
    /// Simplex potentials in the user's sense (`lambda_1 = 0`).
    pub duals: DualPotentials,
    /// Every nonbasic reduced cost is below `-UNIQUENESS_MARGIN` and the basis
    /// is nondegenerate, so no other plan attains the optimum.
    pub unique: bool,
    pub pivots: usize,
}

pub fn lp_oracle(problem: &OtProblem) -> Result<OracleSolution> {
    lp_oracle_with_limit(problem, oracle_cell_limit())
}

/// Northwest-corner start, MODI potentials, Bland's rule for both the
/// entering cell (first improving cell in row-major order) and the leaving
/// cell (smallest row-major index among the tied minimum).
pub fn lp_oracle_with_limit(problem: &OtProblem, limit: usize) -> Result<OracleSolution> {
    problem.validate()?;
    let (n, m) = (problem.n(), problem.m());
    if n * m > limit {
        return Err(Error::SizeGuardExceeded {
            cells: n * m,
            limit,
        });
    }
    let a = match problem.sense {
        Sense::Maximize => problem.weights.clone(),
        Sense::Minimize => problem.weights.mapv(|v| -v),
    };
    let (mut x, mut basic) = northwest(&problem.row_marginals, &problem.col_marginals, true);
    let mut pivots = 0usize;
    let max_pivots = 50 * (n * m).max(100) * (n + m);

    loop {
        let (u, v) = potentials(&a, &basic, n, m);
        let entering = (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .find(|&(i, j)| !basic[i * m + j] && a[(i, j)] - u[i] - v[j] > REDUCED_COST_TOL);
        let Some((ei, ej)) = entering else {
            let nondegenerate = (0..n * m).filter(|&k| basic[k]).all(|k| x[k] > 0.0);
            let unique = nondegenerate
                && (0..n).all(|i| {
                    (0..m).all(|j| basic[i * m + j] || a[(i, j)] - u[i] - v[j] < -UNIQUENESS_MARGIN)
                });
            let values = Matrix::from_shape_vec((n, m), x).expect("shape");
            let plan = TransportPlan::for_problem(values, problem)?;
            let objective = ot_objective(&problem.weights, &plan.values);
            let sign = problem.sense.sign();
            return Ok(OracleSolution {
                objective,
                duals: DualPotentials {
                    lambda: u.iter().map(|v| sign * v).collect(),
                    mu: v.iter().map(|v| sign * v).collect(),
                },
                plan,
                unique,
                pivots,
            });
        };

        let cycle = tree_cycle(&basic, n, m, ei, ej);
        // cycle[0] is the entering cell (+), signs alternate from there.
        let leaving = cycle
            .iter()
            .skip(1)
            .step_by(2)
            .copied()
            .min_by(|&p, &q| x[p].partial_cmp(&x[q]).unwrap().then(p.cmp(&q)))
            .expect("cycle has a minus cell");
        let theta = x[leaving];
        for (pos, &cell) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                x[cell] += theta;
            } else {
                x[cell] -= theta;
            }
        }
        x[leaving] = 0.0;
        basic[leaving] = false;
        basic[ei * m + ej] = true;
        pivots += 1;
        if pivots > max_pivots {
            return Err(Error::MaxItersExceeded(max_pivots));
        }
    }
}

/// Northwest-corner allocation. With `track_basis`, ties advance one index
/// at a time so exactly `n + m - 1` cells are marked basic.
fn northwest(r: &[f64], c: &[f64], track_basis: bool) -> (Vec<f64>, Vec<bool>) {
    let (n, m) = (r.len(), c.len());
    let mut x = vec![0.0; n * m];
    let mut basic = vec![false; n * m];
    let (mut rr, mut cc) = (r.to_vec(), c.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let q = rr[i].min(cc[j]).max(0.0);
        x[i * m + j] = q;
        basic[i * m + j] = true;
        rr[i] -= q;
        cc[j] -= q;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if i == n - 1 {
            j += 1;
        } else if j == m - 1 || rr[i] <= cc[j] {
            rr[i] = 0.0;
            i += 1;
        } else {
            cc[j] = 0.0;
            j += 1;
        }
    }
    if !track_basis {
        basic.iter_mut().for_each(|b| *b = false);
    }
    (x, basic)
}

/// `u_i + v_j = a_ij` on basic cells, `u_0 = 0`.
fn potentials(a: &Matrix, basic: &[bool], n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; m];
    u[0] = 0.0;
    let mut queue = VecDeque::from([(true, 0usize)]);
    while let Some((is_row, k)) = queue.pop_front() {
        if is_row {
            for j in 0..m {
                if basic[k * m + j] && v[j].is_nan() {
                    v[j] = a[(k, j)] - u[k];
                    queue.push_back((false, j));
                }
            }
        } else {
            for i in 0..n {
                if basic[i * m + k] && u[i].is_nan() {
                    u[i] = a[(i, k)] - v[k];
                    queue.push_back((true, i));
                }
            }
        }
    }
    (u, v)
}

/// Cells of the unique cycle formed by adding `(ei, ej)` to the basis tree,
/// starting with the entering cell and alternating row/column moves.
fn tree_cycle(basic: &[bool], n: usize, m: usize, ei: usize, ej: usize) -> Vec<usize> {
    // Path in the tree from column node ej to row node ei. Nodes: rows
    // 0..n, columns n..n+m.
    let target = ei;
    let start = n + ej;
    let mut prev = vec![usize::MAX; n + m];
    prev[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        if node < n {
            for j in 0..m {
                if basic[node * m + j] && prev[n + j] == usize::MAX {
                    prev[n + j] = node;
                    queue.push_back(n + j);
                }
            }
        } else {
            let j = node - n;
            for i in 0..n {
                if basic[i * m + j] && prev[i] == usize::MAX {
                    prev[i] = node;
                    queue.push_back(i);
                }
            }
        }
    }
    // Walk back from row ei to column ej, collecting the edges.
    let mut cells = vec![ei * m + ej];
    let mut node = target;
    while node != start {
        let p = prev[node];
        let cell = if node < n {
            node * m + (p - n)
        } else {
            p * m + (node - n)
        };
        cells.push(cell);
        node = p;
    }
    cells
}

/// `x_ij = min(remaining r_i, remaining c_j)` scanning rows and columns in
/// increasing order. Optimal for maximization when the weights have the
/// Monge property.
pub fn greedy_northwest(problem: &OtProblem) -> Result<TransportPlan> {
    problem.validate()?;
    let (x, _) = northwest(&problem.row_marginals, &problem.col_marginals, false);
    let values = Matrix::from_shape_vec((problem.n(), problem.m()), x).expect("shape");
    TransportPlan::for_problem(values, problem)
}
