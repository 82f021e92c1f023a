//! Test problems and the reproduction suite: the sine grid, the 3x3
//! example with its stagnation path, and the annealing comparison.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::array;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;
use crate::model::{Matrix, OtProblem, Sense};
use crate::solver::{
    make_schedule, solve, AnnealingSchedule, SolveOptions, SolveOutput, StageSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightFunction {
    /// `sin(4 pi ((x - 1/2)^2 + (y - 1/2)^2))`.
    SineRadial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalFunction {
    /// `|x - 1/2|`.
    AbsCentered,
}

/// An `N x N` grid problem sampled at cell centers `(i - 1/2) / N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub size: usize,
    pub weight: WeightFunction,
    pub row_marginal: MarginalFunction,
    pub col_marginal: MarginalFunction,
}

impl GridSpec {
    pub fn standard(size: usize) -> Self {
        GridSpec {
            size,
            weight: WeightFunction::SineRadial,
            row_marginal: MarginalFunction::AbsCentered,
            col_marginal: MarginalFunction::AbsCentered,
        }
    }
}

impl WeightFunction {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            WeightFunction::SineRadial => sine_radial(x, y),
        }
    }
}

impl MarginalFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            MarginalFunction::AbsCentered => (x - 0.5).abs(),
        }
    }
}

pub fn sine_radial(x: f64, y: f64) -> f64 {
    (4.0 * PI * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).sin()
}

fn cell_centers(n: usize) -> Vec<f64> {
    (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect()
}

fn sampled_marginal(f: MarginalFunction, points: &[f64], what: &str) -> Result<Vec<f64>> {
    let raw: Vec<f64> = points.iter().map(|&x| f.eval(x)).collect();
    if let Some(i) = raw.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::ZeroMarginal(format!(
            "{what} marginal vanishes at cell {} of {}",
            i + 1,
            points.len()
        )));
    }
    let total: f64 = raw.iter().sum();
    Ok(raw.iter().map(|v| v / total).collect())
}

pub fn generate_grid(spec: &GridSpec) -> Result<OtProblem> {
    if spec.size < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid size must be at least 2, got {}",
            spec.size
        )));
    }
    let pts = cell_centers(spec.size);
    let a = Matrix::from_shape_fn((spec.size, spec.size), |(i, j)| {
        spec.weight.eval(pts[i], pts[j])
    });
    let r = sampled_marginal(spec.row_marginal, &pts, "row")?;
    let c = sampled_marginal(spec.col_marginal, &pts, "column")?;
    OtProblem::new(a, r, c, Sense::Maximize)
}

/// The 3x3 reference problem.
pub fn small_example() -> OtProblem {
    OtProblem::new(
        array![[0.0, 1.0, 0.5], [0.7, 0.5, 0.3], [0.6, 0.3, 0.0]],
        vec![0.25, 0.25, 0.5],
        vec![0.2, 0.6, 0.2],
        Sense::Maximize,
    )
    .expect("reference data is valid")
}

/// The unique optimum of [`small_example`].
pub fn small_example_solution() -> Matrix {
    array![[0.0, 0.25, 0.0], [0.0, 0.05, 0.2], [0.2, 0.3, 0.0]]
}

/// Row-balanced matrices near which the regularized iteration on
/// [`small_example`] stagnates, in the order it passes them. Each makes
/// plain IPFP cycle.
pub fn cycling_matrices() -> [Matrix; 3] {
    [
        array![[0.0, 0.1875, 0.0625], [0.25, 0.0, 0.0], [0.5, 0.0, 0.0]],
        array![[0.0, 0.25, 0.0], [0.0, 0.0, 0.25], [0.5, 0.0, 0.0]],
        array![[0.0, 0.25, 0.0], [0.0, 0.0, 0.25], [0.1875, 0.3125, 0.0]],
    ]
}

/// SHA-256 over shape, sense and the bit patterns of all entries.
pub fn problem_digest(problem: &OtProblem) -> String {
    let mut h = Sha256::new();
    h.update((problem.n() as u64).to_le_bytes());
    h.update((problem.m() as u64).to_le_bytes());
    h.update([matches!(problem.sense, Sense::Maximize) as u8]);
    let all = problem
        .weights
        .iter()
        .chain(&problem.row_marginals)
        .chain(&problem.col_marginals);
    for v in all {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn max_entry_distance(x: &Matrix, y: &Matrix) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Closest approach of a trajectory to one target matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub distance: f64,
    /// Global step after which the closest snapshot was taken.
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStudy {
    pub eta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub visits: Vec<Visit>,
}

impl TrajectoryStudy {
    /// Indices of targets approached within `threshold`.
    pub fn visited(&self, threshold: f64) -> Vec<usize> {
        (0..self.visits.len())
            .filter(|&k| self.visits[k].distance <= threshold)
            .collect()
    }

    /// Every target approached within `threshold`, at strictly increasing
    /// iterations.
    pub fn passes_in_order(&self, threshold: f64) -> bool {
        self.visited(threshold).len() == self.visits.len()
            && self
                .visits
                .windows(2)
                .all(|w| w[0].iteration < w[1].iteration)
    }
}

/// Snapshots every step for small problems, every 10th otherwise.
pub fn snapshot_stride(problem: &OtProblem) -> usize {
    if problem.n() * problem.m() <= 100 {
        1
    } else {
        10
    }
}

/// Single-stage run recording the closest approach to each target.
pub fn trajectory_study(
    problem: &OtProblem,
    targets: &[Matrix],
    eta: f64,
    tol: f64,
    max_iters: usize,
) -> Result<TrajectoryStudy> {
    let opts = SolveOptions {
        max_iters_per_stage: max_iters,
        snapshot_stride: Some(snapshot_stride(problem)),
    };
    let out = solve(problem, &AnnealingSchedule::single(eta, tol)?, &opts)?;
    let visits = targets
        .iter()
        .map(|t| {
            out.trace
                .snapshots
                .iter()
                .map(|(k, x)| Visit {
                    distance: max_entry_distance(x, t),
                    iteration: *k,
                })
                .fold(
                    Visit {
                        distance: f64::INFINITY,
                        iteration: 0,
                    },
                    |best, v| if v.distance < best.distance { v } else { best },
                )
        })
        .collect();
    Ok(TrajectoryStudy {
        eta,
        iterations: out.iterations(),
        converged: out.converged,
        visits,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealingConfig {
    pub stages: usize,
    pub factor: f64,
    pub final_eta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub grid: GridSpec,
    /// Single-stage temperatures for the grid.
    pub etas: Vec<f64>,
    pub annealing: Option<AnnealingConfig>,
    pub tol: f64,
    pub max_iters: usize,
    /// Temperatures for the small-example stagnation study.
    pub trajectory_etas: Vec<f64>,
    /// Where traces and plans go; nothing is written when unset.
    pub output_dir: Option<PathBuf>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            grid: GridSpec::standard(64),
            etas: vec![1e-2, 1e-3, 1e-4],
            annealing: Some(AnnealingConfig {
                stages: 12,
                factor: 1.5,
                final_eta: 1e-4,
            }),
            tol: 0.01,
            max_iters: 100_000,
            trajectory_etas: vec![1e-3, 1e-4],
            output_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub eta: f64,
    pub tol: f64,
    pub iterations: usize,
    pub final_criterion: f64,
    pub converged: bool,
    pub wall_time: f64,
    pub stages: Vec<StageSummary>,
    pub trace_file: Option<PathBuf>,
    pub plan_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub problem_digest: String,
    pub runs: Vec<RunRecord>,
    pub trajectories: Vec<TrajectoryStudy>,
    /// Failures of individual runs; the rest of the suite still runs.
    pub errors: Vec<String>,
}

impl ExperimentResult {
    pub fn run(&self, label: &str) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.label == label)
    }
}

fn record_run(
    label: String,
    problem: &OtProblem,
    schedule: &AnnealingSchedule,
    max_iters: usize,
    out_dir: Option<&Path>,
) -> Result<RunRecord> {
    let start = Instant::now();
    let opts = SolveOptions {
        max_iters_per_stage: max_iters,
        snapshot_stride: None,
    };
    let out: SolveOutput = solve(problem, schedule, &opts)?;
    let wall_time = start.elapsed().as_secs_f64();
    let (mut trace_file, mut plan_file) = (None, None);
    if let Some(dir) = out_dir {
        let t = dir.join(format!("{label}.trace.csv"));
        let p = dir.join(format!("{label}.plan.csv"));
        io::write_trace_csv(&t, &out.trace.records)?;
        io::write_matrix_csv(&p, &out.plan.values)?;
        trace_file = Some(t);
        plan_file = Some(p);
    }
    Ok(RunRecord {
        label,
        eta: schedule.final_eta(),
        tol: schedule.stages().last().map_or(f64::NAN, |s| s.tol),
        iterations: out.iterations(),
        final_criterion: out.final_criterion(),
        converged: out.converged,
        wall_time,
        stages: out.stages,
        trace_file,
        plan_file,
    })
}

/// Runs the single-stage grid runs, the annealed grid run and the
/// small-example stagnation study. Run labels are `single-<eta>` and
/// `annealed`.
pub fn run_suite(config: &SuiteConfig) -> Result<ExperimentResult> {
    let problem = generate_grid(&config.grid)?;
    let out_dir = config.output_dir.as_deref();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        io::write_problem(&dir.join("grid.toml"), &io::ProblemFile::from_ot(&problem))?;
    }
    let mut result = ExperimentResult {
        problem_digest: problem_digest(&problem),
        runs: Vec::new(),
        trajectories: Vec::new(),
        errors: Vec::new(),
    };

    let mut jobs: Vec<(String, Result<AnnealingSchedule>)> = config
        .etas
        .iter()
        .map(|&eta| {
            (
                format!("single-{eta:e}"),
                AnnealingSchedule::single(eta, config.tol),
            )
        })
        .collect();
    if let Some(a) = &config.annealing {
        jobs.push((
            "annealed".into(),
            make_schedule(a.final_eta, a.stages, a.factor, config.tol),
        ));
    }
    for (label, schedule) in jobs {
        let run = schedule
            .and_then(|s| record_run(label.clone(), &problem, &s, config.max_iters, out_dir));
        match run {
            Ok(r) => result.runs.push(r),
            Err(e) => result.errors.push(format!("{label}: {e}")),
        }
    }

    let small = small_example();
    let targets = cycling_matrices();
    for &eta in &config.trajectory_etas {
        match trajectory_study(&small, &targets, eta, config.tol, config.max_iters) {
            Ok(t) => result.trajectories.push(t),
            Err(e) => result.errors.push(format!("trajectory {eta:e}: {e}")),
        }
    }
    if let Some(dir) = out_dir {
        let json = serde_json::to_string_pretty(&result).expect("results serialize");
        io::write_file(&dir.join("suite.json"), json + "\n")?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_problem;

    #[test]
    fn sine_zeros() {
        assert_eq!(sine_radial(0.5, 0.5), 0.0);
        assert!(sine_radial(1.0, 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_grid() {
        let p = generate_grid(&GridSpec::standard(2)).unwrap();
        for a in p.weights.iter() {
            assert!((a - 1.0).abs() < 1e-15);
        }
        assert_eq!(p.row_marginals, vec![0.5, 0.5]);
        assert_eq!(p.col_marginals, vec![0.5, 0.5]);
    }

    #[test]
    fn even_grids_are_valid_and_odd_rejected() {
        for n in [4, 10, 64] {
            let p = generate_grid(&GridSpec::standard(n)).unwrap();
            validate_problem(&p).unwrap();
            assert!((p.row_marginals.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.col_marginals.iter().all(|v| *v > 0.0));
        }
        assert!(matches!(
            generate_grid(&GridSpec::standard(3)),
            Err(Error::ZeroMarginal(_))
        ));
        assert!(generate_grid(&GridSpec::standard(1)).is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let p = small_example();
        assert_eq!(problem_digest(&p), problem_digest(&small_example()));
        assert_eq!(problem_digest(&p).len(), 64);
        let mut q = p.clone();
        q.weights[(0, 0)] = 1e-300;
        assert_ne!(problem_digest(&p), problem_digest(&q));
    }

    #[test]
    fn cycling_targets_are_row_balanced() {
        let r = small_example().row_marginals;
        for t in cycling_matrices() {
            for (row, ri) in t.rows().into_iter().zip(&r) {
                assert!((row.sum() - ri).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn trajectory_thresholds_are_monotone() {
        let study =
            trajectory_study(&small_example(), &cycling_matrices(), 1e-3, 0.01, 10_000).unwrap();
        assert!(study.converged);
        let mut prev = usize::MAX;
        for th in [1.0, 0.1, 0.05, 0.01, 1e-6] {
            let v = study.visited(th).len();
            assert!(v <= prev);
            prev = v;
        }
        assert!(study.passes_in_order(0.05), "{study:?}");
    }

    #[test]
    fn small_suite_writes_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SuiteConfig {
            grid: GridSpec::standard(8),
            etas: vec![0.1, 0.05],
            annealing: Some(AnnealingConfig {
                stages: 3,
                factor: 1.5,
                final_eta: 0.05,
            }),
            tol: 0.01,
            max_iters: 10_000,
            trajectory_etas: vec![1e-3],
            output_dir: Some(dir.path().to_path_buf()),
        };
        let res = run_suite(&cfg).unwrap();
        assert!(res.errors.is_empty(), "{:?}", res.errors);
        assert_eq!(res.runs.len(), 3);
        for run in &res.runs {
            assert!(run.converged && run.final_criterion < run.tol);
            assert!(run.trace_file.as_ref().unwrap().exists());
            assert!(run.plan_file.as_ref().unwrap().exists());
        }
        assert!(res.run("annealed").is_some());
        assert!(dir.path().join("suite.json").exists());
        // Same configuration, same traces.
        let again = run_suite(&SuiteConfig {
            output_dir: None,
            ..cfg
        })
        .unwrap();
        for (a, b) in res.runs.iter().zip(&again.runs) {
            assert_eq!(a.stages, b.stages);
        }
    }

    #[test]
    fn failing_run_is_kept_as_error() {
        let cfg = SuiteConfig {
            grid: GridSpec::standard(4),
            etas: vec![0.5, -1.0],
            annealing: None,
            trajectory_etas: vec![],
            ..SuiteConfig::default()
        };
        let res = run_suite(&cfg).unwrap();
        assert_eq!(res.runs.len(), 1);
        assert_eq!(res.errors.len(), 1);
    }
}
