//! The `bt` command line. Exit codes: 0 success, 1 input error,
//! 2 non-convergence, 3 plan not balanced.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiments::{self, GridSpec, SuiteConfig};
use crate::io::{self, ProblemFile, RunReport};
use crate::model::{ot_objective, Matrix};
use crate::oracle::{lp_oracle, oracle_cell_limit};
use crate::solver::{make_schedule, solve, AnnealingSchedule, SolveOptions, DEFAULT_MAX_ITERS};
use crate::verify::verify_balanced;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_NOT_BALANCED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "bt", version, about = "Balanced transport solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file with the regularized scaling iteration.
    Solve(SolveArgs),
    /// Write one of the built-in problems.
    Generate(GenerateArgs),
    /// Check a plan for balance against a problem.
    Verify(VerifyArgs),
    /// Render a plan CSV or the weights of a problem file as a PGM image.
    Heatmap(HeatmapArgs),
    /// Run the grid and stagnation experiments.
    Suite(SuiteArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("temperature").required(true))]
pub struct SolveArgs {
    pub problem: PathBuf,
    /// Single-stage temperature.
    #[arg(long, group = "temperature", allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Annealing schedule, e.g. `stages=12,factor=1.5,final=1e-4`.
    #[arg(long, group = "temperature")]
    pub schedule: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    /// Iteration limit per stage.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long)]
    pub out_plan: Option<PathBuf>,
    #[arg(long)]
    pub out_trace: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also dump the raw scaled matrix z (CSV).
    #[arg(long)]
    pub debug_z: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    PaperGrid,
    SmallExample,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub preset: Preset,
    /// Grid size for `paper-grid` (even).
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub problem: PathBuf,
    pub plan: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Plan CSV, or a `.toml` problem file whose weights are drawn.
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Comma-separated single-stage temperatures.
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
    pub etas: Vec<f64>,
    #[arg(long, default_value_t = 0.01)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `stages=<k>,factor=<f>,final=<eta>`.
pub fn parse_schedule(spec: &str, tol: f64) -> Result<AnnealingSchedule> {
    let (mut stages, mut factor, mut last) = (None, None, None);
    for part in spec.split(',') {
        let bad = || Error::InvalidParameter(format!("bad schedule component `{part}`"));
        let (key, value) = part.split_once('=').ok_or_else(bad)?;
        match key.trim() {
            "stages" => stages = Some(value.trim().parse::<usize>().map_err(|_| bad())?),
            "factor" => factor = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
            "final" => last = Some(value.trim().parse::<f64>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    match (stages, factor, last) {
        (Some(k), Some(f), Some(e)) => make_schedule(e, k, f, tol),
        _ => Err(Error::InvalidParameter(
            "schedule needs stages=, factor= and final=".into(),
        )),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Heatmap(a) => cmd_heatmap(&a, out),
        Command::Suite(a) => cmd_suite(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INPUT
        }
    }
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let file = io::read_problem(&args.problem)?;
    let problem = file.to_ot_problem()?;
    let schedule = match (&args.eta, &args.schedule) {
        (Some(eta), _) => AnnealingSchedule::single(*eta, args.tol)?,
        (None, Some(spec)) => parse_schedule(spec, args.tol)?,
        (None, None) => unreachable!("clap requires one of --eta/--schedule"),
    };
    let opts = SolveOptions {
        max_iters_per_stage: args.max_iters,
        snapshot_stride: None,
    };
    let solved = match solve(&problem, &schedule, &opts) {
        Ok(s) => s,
        Err(e @ (Error::NumericalDegeneracy(_) | Error::NonFinite { .. })) => {
            writeln!(out, "status: failed ({e})").ok();
            return Ok(EXIT_NOT_CONVERGED);
        }
        Err(e) => return Err(e),
    };

    let mut outputs = Vec::new();
    if let Some(p) = &args.out_plan {
        io::write_matrix_csv(p, &solved.plan.values)?;
        outputs.push(path_string(p));
    }
    if let Some(p) = &args.out_trace {
        io::write_trace_csv(p, &solved.trace.records)?;
        outputs.push(path_string(p));
    }
    if let Some(p) = &args.debug_z {
        io::write_matrix_csv(p, &solved.state.z)?;
        outputs.push(path_string(p));
    }

    let objective = ot_objective(&problem.weights, &solved.plan.values);
    let oracle_objective = (problem.n() * problem.m() <= oracle_cell_limit())
        .then(|| lp_oracle(&problem).ok().map(|s| s.objective))
        .flatten();
    let optimality_gap = oracle_objective.map(|o| problem.sense.sign() * (o - objective));
    let code = if solved.converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    };
    let status = if solved.converged {
        "converged"
    } else {
        "max-iters"
    };

    writeln!(out, "status: {status}").ok();
    for s in &solved.stages {
        writeln!(
            out,
            "stage eta={:e} iterations={} criterion={:e}{}",
            s.eta,
            s.iterations,
            s.final_criterion,
            if s.converged { "" } else { " (not converged)" }
        )
        .ok();
    }
    writeln!(out, "iterations: {}", solved.iterations()).ok();
    writeln!(out, "objective: {objective:.12}").ok();
    if let (Some(o), Some(g)) = (oracle_objective, optimality_gap) {
        writeln!(out, "oracle objective: {o:.12} (gap {g:e})").ok();
    }

    if let Some(p) = &args.report {
        outputs.push(path_string(p));
        let report = RunReport {
            status: status.into(),
            exit_code: code,
            stages: solved.stages.clone(),
            iterations: solved.iterations(),
            final_criterion: solved.final_criterion(),
            objective,
            oracle_objective,
            optimality_gap,
            outputs,
        };
        io::write_report(p, &report)?;
    }
    Ok(code)
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<i32> {
    let problem = match args.preset {
        Preset::SmallExample => experiments::small_example(),
        Preset::PaperGrid => experiments::generate_grid(&GridSpec::standard(args.size))?,
    };
    io::write_problem(&args.out, &ProblemFile::from_ot(&problem))?;
    writeln!(
        out,
        "wrote {}x{} problem to {}",
        problem.n(),
        problem.m(),
        args.out.display()
    )
    .ok();
    Ok(EXIT_OK)
}

fn at(loc: Option<(usize, usize)>) -> String {
    loc.map_or_else(String::new, |(i, j)| format!(" at ({}, {})", i + 1, j + 1))
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let problem = io::read_problem(&args.problem)?.to_ot_problem()?;
    let plan = io::read_matrix_csv(&args.plan)?;
    let report = verify_balanced(&problem, &plan, None)?;
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.12}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    writeln!(out, "balanced: {}", report.is_balanced).ok();
    writeln!(
        out,
        "max slackness violation: {:e}{}",
        report.max_slackness_violation,
        at(report.slackness_location)
    )
    .ok();
    writeln!(
        out,
        "max dual infeasibility: {:e}{}",
        report.max_dual_infeasibility,
        at(report.infeasibility_location)
    )
    .ok();
    writeln!(
        out,
        "marginal residuals: rows {:e}, columns {:e}",
        report.marginal_residuals.0, report.marginal_residuals.1
    )
    .ok();
    writeln!(
        out,
        "primal objective: {:.12}",
        report.objectives.total_ot_value
    )
    .ok();
    if let Some(d) = report.objectives.dual_value {
        writeln!(out, "dual objective: {d:.12}").ok();
    }
    writeln!(out, "duality gap: {:e}", report.duality_gap).ok();
    writeln!(out, "lambda: [{}]", fmt(&report.duals.lambda)).ok();
    writeln!(out, "mu: [{}]", fmt(&report.duals.mu)).ok();
    Ok(if report.is_balanced {
        EXIT_OK
    } else {
        EXIT_NOT_BALANCED
    })
}

pub fn cmd_heatmap(args: &HeatmapArgs, out: &mut dyn Write) -> Result<i32> {
    let is_toml = args.input.extension().is_some_and(|e| e == "toml");
    let x: Matrix = if is_toml {
        io::read_problem(&args.input)?.weight_matrix()?
    } else {
        io::read_matrix_csv(&args.input)?
    };
    io::write_pgm(&args.out, &x)?;
    writeln!(
        out,
        "wrote {}x{} heatmap to {}",
        x.ncols(),
        x.nrows(),
        args.out.display()
    )
    .ok();
    Ok(EXIT_OK)
}

pub fn cmd_suite(args: &SuiteArgs, out: &mut dyn Write) -> Result<i32> {
    let config = SuiteConfig {
        grid: GridSpec::standard(args.size),
        etas: args.etas.clone(),
        tol: args.tol,
        max_iters: args.max_iters,
        output_dir: args.out_dir.clone(),
        ..SuiteConfig::default()
    };
    let result = experiments::run_suite(&config)?;
    writeln!(out, "problem digest: {}", result.problem_digest).ok();
    for r in &result.runs {
        writeln!(
            out,
            "{:<16} iterations={:>7} criterion={:.3e} converged={} time={:.2}s",
            r.label, r.iterations, r.final_criterion, r.converged, r.wall_time
        )
        .ok();
    }
    for t in &result.trajectories {
        let visits: Vec<String> = t
            .visits
            .iter()
            .map(|v| format!("{:.2e}@{}", v.distance, v.iteration))
            .collect();
        writeln!(
            out,
            "trajectory eta={:e} iterations={} closest approaches: {}",
            t.eta,
            t.iterations,
            visits.join(" ")
        )
        .ok();
    }
    for e in &result.errors {
        writeln!(out, "error: {e}").ok();
    }
    let all_converged = result.errors.is_empty() && result.runs.iter().all(|r| r.converged);
    Ok(if all_converged {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}
