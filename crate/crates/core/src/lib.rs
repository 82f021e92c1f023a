//! Balanced transportation: entropic and isoelastic matrix balancing for
//! optimal transport and multi-objective matrix allocation problems.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classic;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod oracle;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use model::{
    AnyProblem, DualPotentials, Matrix, MomaProblem, OtProblem, Scalings, Sense, TransportPlan,
};
pub use oracle::{greedy_northwest, lp_oracle, OracleSolution};
pub use solver::{make_schedule, solve, AnnealingSchedule, RegParams, SolveOptions, SolveOutput};
pub use verify::{hilbert_distance, recover_duals, verify_balanced, KktReport};
