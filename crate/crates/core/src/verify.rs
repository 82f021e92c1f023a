//! Certificates for balanced allocations: Hilbert projective distance, dual
//! recovery from a plan's support, and the complementary-slackness report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    marginal_residuals, moma_to_ot, objective_report, AnyProblem, DualPotentials, Matrix,
    ObjectiveReport, OtProblem, Sense, TransportPlan,
};

/// Entries above this fraction of the largest plan entry form the support.
pub const SUPPORT_THRESHOLD: f64 = 1e-10;
/// Relative tolerance for every field that decides `is_balanced`.
pub const KKT_TOL: f64 = 1e-8;

/// `ln(max_i(x_i/y_i) / min_i(x_i/y_i))`.
pub fn hilbert_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "second vector",
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("vectors have no entries"));
    }
    for (what, v) in [("first vector", x), ("second vector", y)] {
        if let Some(index) = v.iter().position(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::NonPositiveComponent {
                what,
                index,
                value: v[index],
            });
        }
    }
    let (mut hi, mut lo) = (f64::MIN, f64::MAX);
    for (a, b) in x.iter().zip(y) {
        let q = a / b;
        hi = hi.max(q);
        lo = lo.min(q);
    }
    Ok((hi / lo).ln())
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Duals read off a support forest, with the support edges left out of it.
struct SupportDuals {
    duals: DualPotentials,
    /// Component label per row, then per column (node `n + j`).
    component: Vec<usize>,
    support: Vec<(usize, usize)>,
    /// Support edges that close a cycle, with `a_ij - lambda_i - mu_j`.
    off_tree: Vec<(usize, usize, f64)>,
}

fn support_of(plan: &Matrix) -> Vec<(usize, usize)> {
    let max = plan.iter().copied().fold(0.0, f64::max);
    let cut = SUPPORT_THRESHOLD * max;
    plan.indexed_iter()
        .filter(|(_, &v)| v > cut && v > 0.0)
        .map(|(ij, _)| ij)
        .collect()
}

/// Builds a maximum-mass spanning forest of the bipartite support graph,
/// anchors `lambda = 0` at the lowest-indexed row of each component and
/// propagates `lambda_i + mu_j = a_ij` along forest edges. `a` is taken in
/// maximization orientation.
fn support_duals(a: &Matrix, plan: &Matrix) -> SupportDuals {
    let (n, m) = a.dim();
    let support = support_of(plan);
    let mut order = support.clone();
    order.sort_by(|&(i1, j1), &(i2, j2)| {
        plan[(i2, j2)]
            .partial_cmp(&plan[(i1, j1)])
            .unwrap()
            .then((i1, j1).cmp(&(i2, j2)))
    });
    let mut uf = UnionFind::new(n + m);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + m];
    let mut off = Vec::new();
    for &(i, j) in &order {
        if uf.union(i, n + j) {
            adj[i].push(n + j);
            adj[n + j].push(i);
        } else {
            off.push((i, j));
        }
    }

    let mut value = vec![f64::NAN; n + m];
    let mut component = vec![usize::MAX; n + m];
    let mut label = 0;
    for root in 0..n + m {
        if component[root] != usize::MAX {
            continue;
        }
        // Rows come first, so a component's root is its lowest-indexed row
        // whenever it has one.
        value[root] = 0.0;
        component[root] = label;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if component[w] == usize::MAX {
                    component[w] = label;
                    value[w] = if v < n {
                        a[(v, w - n)] - value[v]
                    } else {
                        a[(w, v - n)] - value[v]
                    };
                    stack.push(w);
                }
            }
        }
        label += 1;
    }

    let lambda = value[..n].to_vec();
    let mut mu = value[n..].to_vec();
    // Columns without support: smallest value that keeps the column feasible.
    for j in 0..m {
        if adj[n + j].is_empty() && component[n + j] != usize::MAX {
            let mut best = f64::NEG_INFINITY;
            for i in 0..n {
                best = best.max(a[(i, j)] - lambda[i]);
            }
            mu[j] = best;
        }
    }
    let mut off_tree: Vec<(usize, usize, f64)> = off
        .into_iter()
        .map(|(i, j)| (i, j, a[(i, j)] - lambda[i] - mu[j]))
        .collect();
    off_tree.sort_by_key(|x| (x.0, x.1));
    SupportDuals {
        duals: DualPotentials { lambda, mu },
        component,
        support,
        off_tree,
    }
}

fn oriented_weights(problem: &OtProblem) -> Matrix {
    match problem.sense {
        Sense::Maximize => problem.weights.clone(),
        Sense::Minimize => problem.weights.mapv(|a| -a),
    }
}

fn orient_duals(d: DualPotentials, sense: Sense) -> DualPotentials {
    match sense {
        Sense::Maximize => d,
        Sense::Minimize => DualPotentials {
            lambda: d.lambda.iter().map(|v| -v).collect(),
            mu: d.mu.iter().map(|v| -v).collect(),
        },
    }
}

fn check_plan_shape(problem: &OtProblem, plan: &Matrix) -> Result<()> {
    if plan.dim() != problem.weights.dim() {
        return Err(Error::DimensionMismatch {
            what: "plan cells",
            expected: problem.weights.len(),
            got: plan.len(),
        });
    }
    Ok(())
}

/// Potentials with `lambda_i + mu_j = a_ij` on the plan's support.
///
/// Fails with `InconsistentSupport` when the support contains a cycle whose
/// weights admit no such potentials, which certifies that the plan is not
/// optimal. The reported cell is the lightest support entry on such a cycle.
pub fn recover_duals(problem: &OtProblem, plan: &TransportPlan) -> Result<DualPotentials> {
    check_plan_shape(problem, &plan.values)?;
    let a = oriented_weights(problem);
    let sd = support_duals(&a, &plan.values);
    if let Some(&(row, col, residual)) = sd
        .off_tree
        .iter()
        .find(|(_, _, res)| res.exp_m1().abs() > KKT_TOL)
    {
        return Err(Error::InconsistentSupport { row, col, residual });
    }
    Ok(orient_duals(sd.duals, problem.sense))
}

/// Result of checking complementary slackness, dual feasibility and the
/// marginals. Violations are relative: `|exp(a_ij - lambda_i - mu_j) - 1|`,
/// i.e. `|alpha_i b_ij / beta_j - 1|`. Locations are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub is_balanced: bool,
    pub max_slackness_violation: f64,
    pub slackness_location: Option<(usize, usize)>,
    pub max_dual_infeasibility: f64,
    pub infeasibility_location: Option<(usize, usize)>,
    /// Row and column residuals, relative to the total mass.
    pub marginal_residuals: (f64, f64),
    pub objectives: ObjectiveReport,
    /// Dual minus primal objective for maximization, primal minus dual for
    /// minimization.
    pub duality_gap: f64,
    pub duals: DualPotentials,
}

/// Shifts whole support components (`lambda += d`, `mu -= d`) so that
/// cross-component cells satisfy `lambda_i + mu_j >= a_ij` when possible.
/// These are difference constraints, solved by Bellman-Ford.
fn balance_components(a: &Matrix, sd: &mut SupportDuals) {
    let (n, m) = a.dim();
    let k = sd
        .component
        .iter()
        .copied()
        .filter(|&c| c != usize::MAX)
        .max()
        .map_or(0, |c| c + 1);
    if k <= 1 {
        return;
    }
    let (lambda, mu) = (&sd.duals.lambda, &sd.duals.mu);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..m {
            let (ci, cj) = (sd.component[i], sd.component[n + j]);
            if ci != cj {
                // d_cj - d_ci <= lambda_i + mu_j - a_ij
                edges.push((ci, cj, lambda[i] + mu[j] - a[(i, j)]));
            }
        }
    }
    let mut shift = vec![0.0f64; k];
    for _ in 0..k {
        let mut changed = false;
        for &(u, v, w) in &edges {
            if shift[u] + w < shift[v] {
                shift[v] = shift[u] + w;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let feasible = edges
        .iter()
        .all(|&(u, v, w)| shift[u] + w >= shift[v] - 1e-15);
    if !feasible {
        return;
    }
    for i in 0..n {
        sd.duals.lambda[i] += shift[sd.component[i]];
    }
    for j in 0..m {
        sd.duals.mu[j] -= shift[sd.component[n + j]];
    }
}

fn verify_ot(
    problem: &OtProblem,
    plan: &Matrix,
    duals: Option<&DualPotentials>,
) -> Result<KktReport> {
    check_plan_shape(problem, plan)?;
    if let Some(((i, j), &v)) = plan.indexed_iter().find(|(_, &v)| !(v >= 0.0)) {
        return Err(Error::NegativeEntry {
            row: i,
            col: j,
            value: v,
        });
    }
    let a = oriented_weights(problem);
    let (n, m) = a.dim();
    let support = support_of(plan);
    let oriented = match duals {
        Some(d) => {
            if d.lambda.len() != n || d.mu.len() != m {
                return Err(Error::DimensionMismatch {
                    what: "dual potentials",
                    expected: n + m,
                    got: d.lambda.len() + d.mu.len(),
                });
            }
            let mut d = d.clone();
            if problem.sense == Sense::Minimize {
                d = orient_duals(d, Sense::Minimize);
            }
            d
        }
        None => {
            let mut sd = support_duals(&a, plan);
            balance_components(&a, &mut sd);
            debug_assert_eq!(sd.support, support);
            sd.duals
        }
    };

    let mut in_support = vec![false; n * m];
    for &(i, j) in &support {
        in_support[i * m + j] = true;
    }
    let (mut slack, mut slack_at) = (0.0f64, None);
    let (mut infeas, mut infeas_at) = (0.0f64, None);
    for i in 0..n {
        for j in 0..m {
            let rel = (a[(i, j)] - oriented.lambda[i] - oriented.mu[j]).exp_m1();
            if in_support[i * m + j] {
                if rel.abs() > slack {
                    slack = rel.abs();
                    slack_at = Some((i, j));
                }
            } else if rel > infeas {
                infeas = rel;
                infeas_at = Some((i, j));
            }
        }
    }

    let mass = problem.mass();
    let (rr, cr) = marginal_residuals(plan, &problem.row_marginals, &problem.col_marginals);
    let marginal = (rr / mass, cr / mass);
    let user_duals = orient_duals(oriented, problem.sense);
    let objectives = objective_report(problem, plan, Some(&user_duals));
    let dual_value = objectives.dual_value.unwrap_or(f64::NAN);
    let duality_gap = problem.sense.sign() * (dual_value - objectives.total_ot_value);
    let is_balanced =
        slack <= KKT_TOL && infeas <= KKT_TOL && marginal.0 <= KKT_TOL && marginal.1 <= KKT_TOL;
    Ok(KktReport {
        is_balanced,
        max_slackness_violation: slack,
        slackness_location: slack_at,
        max_dual_infeasibility: infeas,
        infeasibility_location: infeas_at,
        marginal_residuals: marginal,
        objectives,
        duality_gap,
        duals: user_duals,
    })
}

/// Checks that `plan` is a balanced solution: positive weights `alpha` and
/// multipliers `beta` with `alpha_i b_ij <= beta_j` everywhere and equality on
/// the support (reversed for minimization), plus both marginals.
///
/// Allocation problems are checked through their transport form
/// `a = ln b`. When `duals` is absent they are recovered from the support;
/// an inconsistent support is reported as a slackness violation rather
/// than an error.
pub fn verify_balanced<'a>(
    problem: impl Into<AnyProblem<'a>>,
    plan: &Matrix,
    duals: Option<&DualPotentials>,
) -> Result<KktReport> {
    match problem.into() {
        AnyProblem::Ot(p) => verify_ot(p, plan, duals),
        AnyProblem::Moma(p) => verify_ot(&moma_to_ot(p)?, plan, duals),
    }
}
