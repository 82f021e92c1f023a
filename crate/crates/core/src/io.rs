//! File formats: TOML problem files, plan and trace CSV, binary PGM
//! heatmaps and JSON run reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{moma_to_ot, ot_to_moma, Matrix, MomaProblem, OtProblem, Sense};
use crate::solver::{StageSummary, TraceRecord};

/// How the `weights` array of a problem file is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightForm {
    /// Transport weights `a`.
    #[default]
    Additive,
    /// Positive allocation coefficients `b = exp(a)`.
    Multiplicative,
}

/// On-disk problem description. `weights` is row-major, `n * m` long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub m: usize,
    pub sense: Sense,
    #[serde(default)]
    pub form: WeightForm,
    pub weights: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
}

impl ProblemFile {
    pub fn from_ot(problem: &OtProblem) -> Self {
        ProblemFile {
            n: problem.n(),
            m: problem.m(),
            sense: problem.sense,
            form: WeightForm::Additive,
            weights: problem.weights.iter().copied().collect(),
            r: problem.row_marginals.clone(),
            c: problem.col_marginals.clone(),
        }
    }

    pub fn from_moma(problem: &MomaProblem) -> Self {
        ProblemFile {
            n: problem.n(),
            m: problem.m(),
            sense: problem.sense,
            form: WeightForm::Multiplicative,
            weights: problem.coefficients.iter().copied().collect(),
            r: problem.row_marginals.clone(),
            c: problem.col_marginals.clone(),
        }
    }

    /// The weights as an `n x m` matrix, in whatever form the file declares.
    pub fn weight_matrix(&self) -> Result<Matrix> {
        Matrix::from_shape_vec((self.n, self.m), self.weights.clone()).map_err(|_| {
            Error::DimensionMismatch {
                what: "weights",
                expected: self.n * self.m,
                got: self.weights.len(),
            }
        })
    }

    pub fn to_ot_problem(&self) -> Result<OtProblem> {
        let w = self.weight_matrix()?;
        match self.form {
            WeightForm::Additive => OtProblem::new(w, self.r.clone(), self.c.clone(), self.sense),
            WeightForm::Multiplicative => moma_to_ot(&self.to_moma_problem()?),
        }
    }

    pub fn to_moma_problem(&self) -> Result<MomaProblem> {
        let w = self.weight_matrix()?;
        match self.form {
            WeightForm::Additive => ot_to_moma(&self.to_ot_problem()?),
            WeightForm::Multiplicative => {
                MomaProblem::new(w, self.r.clone(), self.c.clone(), self.sense)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem files always serialize")
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Position of `key = ...` in a TOML document, for length diagnostics.
fn key_position(text: &str, key: &str) -> (usize, usize) {
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return (i + 1, line.len() - trimmed.len() + 1);
            }
        }
    }
    (1, 1)
}

/// Parses a problem document; `origin` names it in diagnostics.
pub fn parse_problem(text: &str, origin: &str) -> Result<ProblemFile> {
    let file: ProblemFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        Error::Parse {
            path: origin.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let checks = [
        ("weights", file.weights.len(), file.n * file.m),
        ("r", file.r.len(), file.n),
        ("c", file.c.len(), file.m),
    ];
    for (key, got, expected) in checks {
        if got != expected {
            let (line, column) = key_position(text, key);
            return Err(Error::Parse {
                path: origin.to_string(),
                line,
                column,
                message: format!("`{key}` has {got} entries, expected {expected}"),
            });
        }
    }
    Ok(file)
}

pub fn read_problem(path: &Path) -> Result<ProblemFile> {
    parse_problem(&read_text(path)?, &path.display().to_string())
}

pub fn write_problem(path: &Path, file: &ProblemFile) -> Result<()> {
    write_file(path, file.to_toml())
}

/// Row-major CSV, one matrix row per line, 17 significant digits.
pub fn matrix_to_csv(x: &Matrix) -> String {
    let mut out = String::new();
    for row in x.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`matrix_to_csv`]. Blank lines are skipped; every row must
/// have the same number of fields.
pub fn parse_matrix_csv(text: &str, origin: &str) -> Result<Matrix> {
    let parse_err = |line, column, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        column,
        message,
    };
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut column = 1;
        let mut count = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                parse_err(i + 1, column, format!("`{}` is not a number", field.trim()))
            })?;
            values.push(v);
            count += 1;
            column += field.chars().count() + 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(parse_err(
                    i + 1,
                    1,
                    format!("row has {count} fields, expected {w}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let Some(width) = width else {
        return Err(Error::Empty("matrix file has no rows"));
    };
    Ok(Matrix::from_shape_vec((rows, width), values).expect("rectangular"))
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    parse_matrix_csv(&read_text(path)?, &path.display().to_string())
}

pub fn write_matrix_csv(path: &Path, x: &Matrix) -> Result<()> {
    write_file(path, matrix_to_csv(x))
}

pub fn trace_to_csv(records: &[TraceRecord]) -> String {
    let mut out = String::from("iter,eta,criterion\n");
    for r in records {
        writeln!(out, "{},{:.16e},{:.16e}", r.k, r.eta, r.criterion).unwrap();
    }
    out
}

pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    write_file(path, trace_to_csv(records))
}

/// `(iter, eta, criterion)` rows of a trace file.
pub fn parse_trace_csv(text: &str, origin: &str) -> Result<Vec<(usize, f64, f64)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "iter,eta,criterion" => {}
        _ => {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 1,
                column: 1,
                message: "expected header `iter,eta,criterion`".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            column: 1,
            message: msg.to_string(),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad("expected 3 fields"));
        }
        let k = fields[0].parse().map_err(|_| bad("bad iteration index"))?;
        let eta = fields[1].parse().map_err(|_| bad("bad eta"))?;
        let crit = fields[2].parse().map_err(|_| bad("bad criterion"))?;
        out.push((k, eta, crit));
    }
    Ok(out)
}

/// 8-bit binary PGM, first matrix row at the top. Values are mapped
/// linearly from `[min, max]` to `[0, 255]`; a constant matrix is mid-gray.
pub fn pgm_bytes(x: &Matrix) -> Result<Vec<u8>> {
    let (h, w) = x.dim();
    if h == 0 || w == 0 {
        return Err(Error::Empty("heatmap input has no entries"));
    }
    if let Some(k) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEntry {
            what: "heatmap",
            index: k,
        });
    }
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(x.iter().map(|&v| {
        if max > min {
            ((v - min) / (max - min) * 255.0).round() as u8
        } else {
            128
        }
    }));
    Ok(out)
}

pub fn write_pgm(path: &Path, x: &Matrix) -> Result<()> {
    write_file(path, pgm_bytes(x)?)
}

/// Summary written by `bt solve --report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub status: String,
    pub exit_code: i32,
    pub stages: Vec<StageSummary>,
    pub iterations: usize,
    pub final_criterion: f64,
    pub objective: f64,
    /// Exact optimum, when the problem fits the oracle size guard.
    pub oracle_objective: Option<f64>,
    /// `sense * (oracle optimum - objective)`, nonnegative up to rounding.
    pub optimality_gap: Option<f64>,
    pub outputs: Vec<String>,
}

pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("reports always serialize");
    write_file(path, json + "\n")
}
