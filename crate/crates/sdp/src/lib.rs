//! Dense semidefinite programming for small block-diagonal problems.
//!
//! Problems have the form
//!
//! ```text
//! minimize    c·x
//! subject to  F_b0 + Σ_i x_i F_bi ⪰ 0      for every LMI block b
//!             a_l·x  (≤ | = | ≥)  r_l       for every linear row l
//!             lo_i ≤ x_i ≤ hi_i             (optional)
//! ```
//!
//! and are solved by an infeasible-start primal-dual interior-point method
//! with Nesterov–Todd scaling. Blocks are at most 8×8; the variable count is
//! not capped because the Schur complement is factorized with a block-arrow
//! elimination that keeps problems with thousands of weakly coupled blocks
//! cheap.
//!
//! ```
//! use enrand_sdp::{solve, LmiBlock, SdpOptions, SdpProblem, Status};
//! use nalgebra::DMatrix;
//!
//! // minimize x  s.t. [[x, 1], [1, x]] ⪰ 0
//! let mut p = SdpProblem::new(1);
//! p.set_objective(vec![1.0]);
//! p.add_block(
//!     LmiBlock::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
//!         .with_term(0, DMatrix::identity(2, 2)),
//! );
//! let sol = solve(&p, &SdpOptions::default()).unwrap();
//! assert_eq!(sol.status, Status::Optimal);
//! assert!((sol.x[0] - 1.0).abs() < 1e-7);
//! ```

mod ipm;
mod problem;
mod schur;
mod solve;

pub use problem::{LinearConstraint, LmiBlock, SdpProblem, Sense, MAX_BLOCK_DIM};
pub use solve::{check_feasible, feasibility_slack, solve, Duals, FeasibilityReport, SdpOptions, SdpSolution, Status};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("ill-posed problem: {0}")]
    IllPosed(String),
    #[error("solver stopped with status {status:?}: {detail}")]
    Solver { status: Status, detail: String },
}
