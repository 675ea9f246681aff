//! Quadratic programs of the stepping scheme and their solvers.
//!
//! Each program minimizes ½ dx' M dx − dx' f subject to linearized
//! equality rows (c + ∇C dx = 0) and inequality rows (h + ∇H dx ≥ 0) with
//! M diagonal positive. Two solvers share the problem type: the
//! infeasible-start active-set method with incremental factor updates and
//! a primal-dual interior-point baseline used for benchmarking.

pub mod active_set;
pub mod cholesky;
pub mod interior_point;

pub use active_set::{active_set_solve, solve_equality_system, ActiveSetOptions};
pub use cholesky::{DependenceSignal, UpdatableCholesky, DEPENDENCE_THRESHOLD};
pub use interior_point::interior_point_solve;

use crate::rows::SparseRow;

/// One quadratic program instance.
#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    /// Inverse of the diagonal mass matrix, length n.
    pub inv_mass: Vec<f64>,
    /// Equality gradient rows and their current constraint values c.
    pub eq_rows: Vec<SparseRow>,
    pub eq_values: Vec<f64>,
    /// Inequality gradient rows and their current constraint values h.
    pub ineq_rows: Vec<SparseRow>,
    pub ineq_values: Vec<f64>,
    /// Force offset f in the objective (friction term).
    pub force_offset: Vec<f64>,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.inv_mass.len()
    }

    /// Objective value ½ dx' M dx − dx' f.
    pub fn objective(&self, dx: &[f64]) -> f64 {
        dx.iter()
            .zip(&self.inv_mass)
            .zip(&self.force_offset)
            .map(|((&d, &im), &f)| 0.5 * d * d / im - d * f)
            .sum()
    }
}

/// Per-solve diagnostics counters.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub exchanges: usize,
    pub factor_updates: usize,
    pub refactorizations: usize,
    pub iterations: usize,
    /// Relative residual of the last reduced linear solve.
    pub residual: f64,
}

/// Solution of one program.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub dx: Vec<f64>,
    /// Multipliers of the equality rows, signed so that the stationarity
    /// condition reads M dx = −∇C' λ + ∇H' γ + f.
    pub eq_multipliers: Vec<f64>,
    /// Multipliers of all inequality rows (zero for inactive rows), γ ≥ 0.
    pub ineq_multipliers: Vec<f64>,
    /// Indices of the inequality rows active at the solution.
    pub working_set: Vec<usize>,
    pub stats: SolveStats,
}

/// KKT residuals of a candidate solution, for certification.
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    pub stationarity: f64,
    pub eq_violation: f64,
    pub ineq_violation: f64,
    pub dual_min: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn of(problem: &QpProblem, sol: &QpSolution) -> Self {
        let n = problem.n();
        let mut resid = vec![0.0; n];
        for (i, &d) in sol.dx.iter().enumerate() {
            resid[i] = d / problem.inv_mass[i] - problem.force_offset[i];
        }
        for (row, &l) in problem.eq_rows.iter().zip(&sol.eq_multipliers) {
            row.axpy_into(l, &mut resid);
        }
        for (row, &g) in problem.ineq_rows.iter().zip(&sol.ineq_multipliers) {
            row.axpy_into(-g, &mut resid);
        }
        let stationarity = resid.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        let eq_violation = problem
            .eq_rows
            .iter()
            .zip(&problem.eq_values)
            .map(|(r, &c)| (c + r.dot_dense(&sol.dx)).abs())
            .fold(0.0f64, f64::max);

        let mut ineq_violation = 0.0f64;
        let mut complementarity = 0.0f64;
        for ((row, &h), &g) in problem
            .ineq_rows
            .iter()
            .zip(&problem.ineq_values)
            .zip(&sol.ineq_multipliers)
        {
            let v = h + row.dot_dense(&sol.dx);
            ineq_violation = ineq_violation.max(-v);
            complementarity = complementarity.max((g * v).abs());
        }
        let dual_min = sol.ineq_multipliers.iter().copied().fold(0.0f64, f64::min);

        KktReport {
            stationarity,
            eq_violation,
            ineq_violation,
            dual_min,
            complementarity,
        }
    }
}
