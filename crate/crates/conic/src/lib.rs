//! Dense conic solver for small LPs and complex SDPs.
//!
//! Programs are stated as
//!
//! ```text
//! minimize    c . x
//! subject to  A x = b,  x in R_+^n x H_+^{k_1} x ... x H_+^{k_p}
//! ```
//!
//! where each `H_+^k` is the cone of k x k complex Hermitian PSD matrices and
//! block terms enter through `Re Tr(A_b X_b)`. The solver runs a primal-dual
//! interior point method on the homogeneous self-dual embedding, so
//! infeasibility and unboundedness come back with certificates rather than
//! iteration-count guesses.

mod ipm;
mod program;

pub use program::{im_entry, re_entry, CMat, ConicProgram, LinearExpr, Row};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("wrong program class: {0}")]
    WrongClass(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::MaxIter => "max_iter",
        }
    }
}

/// Tolerances. `eq_tol`, `psd_tol` and `opt_tol` are the acceptance targets
/// for a reported optimum; the remaining fields steer the iteration.
#[derive(Clone, Debug)]
pub struct Settings {
    pub eq_tol: f64,
    pub psd_tol: f64,
    pub opt_tol: f64,
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub infeas_tol: f64,
    pub max_iter: usize,
    pub step_damping: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            eq_tol: 1e-8,
            psd_tol: 1e-9,
            opt_tol: 1e-6,
            feas_tol: 1e-11,
            gap_tol: 1e-11,
            infeas_tol: 1e-9,
            max_iter: 120,
            step_damping: 0.98,
        }
    }
}

/// Result of a solve. On `Infeasible`, `dual` holds a Farkas vector `y` with
/// `b . y = 1` and `A^T y` in the negative dual cone. On `Unbounded`, the
/// primal fields hold a ray with `A x = 0` and `c . x = -1`.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub status: Status,
    pub objective: f64,
    pub dual_objective: f64,
    pub scalars: Vec<f64>,
    pub blocks: Vec<CMat>,
    pub dual: Vec<f64>,
    pub dual_scalars: Vec<f64>,
    pub dual_blocks: Vec<CMat>,
    pub max_eq_residual: f64,
    pub min_block_eig: f64,
    pub iterations: usize,
    /// Converged only to the acceptance targets, not the internal ones.
    pub reduced_accuracy: bool,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }
}

/// Solve a program without PSD blocks.
pub fn solve_lp(p: &ConicProgram, settings: &Settings) -> Result<SolveReport, ConicError> {
    if !p.block_dims.is_empty() {
        return Err(ConicError::WrongClass("solve_lp called with PSD blocks"));
    }
    if p.n_scalars == 0 {
        return Err(ConicError::Malformed("no variables".into()));
    }
    ipm::solve(p, settings)
}

/// Solve a program with at least one PSD block.
pub fn solve_sdp(p: &ConicProgram, settings: &Settings) -> Result<SolveReport, ConicError> {
    if p.block_dims.is_empty() {
        return Err(ConicError::WrongClass("solve_sdp called without PSD blocks"));
    }
    ipm::solve(p, settings)
}

/// Solve any program in the supported form.
pub fn solve(p: &ConicProgram, settings: &Settings) -> Result<SolveReport, ConicError> {
    ipm::solve(p, settings)
}

/// Smallest `t` in `[lo, hi]` for which the monotone predicate holds, to
/// within `tol`. Returns `None` when the predicate fails at `hi`.
pub fn bisect_min<E>(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    mut feasible: impl FnMut(f64) -> Result<bool, E>,
) -> Result<Option<f64>, E> {
    if !feasible(hi)? {
        return Ok(None);
    }
    if feasible(lo)? {
        return Ok(Some(lo));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}
