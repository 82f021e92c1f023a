use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report. Indices carried by variants are
/// 0-based; user-facing output adds one.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty problem: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-positive {what} marginal at index {index}: {value}")]
    NonPositiveMarginal {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("global feasibility violated: row total {row_total} vs column total {col_total}")]
    GlobalFeasibilityViolation { row_total: f64, col_total: f64 },
    #[error("non-positive coefficient at ({row}, {col}): {value}")]
    NonPositiveCoefficient { row: usize, col: usize, value: f64 },
    #[error("non-finite {what} entry at index {index}")]
    NonFiniteEntry { what: &'static str, index: usize },
    #[error("exp({value}) at ({row}, {col}) is not representable")]
    Overflow { row: usize, col: usize, value: f64 },
    #[error("non-positive {what} weight at index {index}: {value}")]
    NonPositiveWeight {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("matrix entry at ({row}, {col}) must be positive, got {value}")]
    NonPositiveEntry { row: usize, col: usize, value: f64 },
    #[error("plan entry at ({row}, {col}) is negative: {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("{what} entry {index} must be positive, got {value}")]
    NonPositiveComponent {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("non-finite value produced during iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("division degeneracy: {what} denominator at index {index} underflowed to zero")]
    DivisionDegeneracy { what: &'static str, index: usize },
    #[error("{what} {index} is identically zero")]
    ZeroLine { what: &'static str, index: usize },
    #[error("root bracketing failed for {what} multiplier {index}")]
    RootBracketFailure { what: &'static str, index: usize },
    #[error("iteration limit of {0} exceeded")]
    MaxItersExceeded(usize),
    #[error("support is inconsistent at ({row}, {col}): residual {residual}")]
    InconsistentSupport {
        row: usize,
        col: usize,
        residual: f64,
    },
    #[error("{cells} cells exceed the oracle size guard of {limit}")]
    SizeGuardExceeded { cells: usize, limit: usize },
    #[error("zero marginal: {0}")]
    ZeroMarginal(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
}
