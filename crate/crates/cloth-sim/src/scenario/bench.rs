//! Solver benchmark: the same scenario run under the active-set solver and
//! the interior-point baseline. Trajectory equivalence is enforced before
//! any timing claim; timings use one warm-up run plus the median of three,
//! all sequential, wall-clocked around the stepping loop only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scenario::config::{ScenarioConfig, SolverKind};
use crate::scenario::runner::run_scenario_strict;
use crate::scenario::trace::Trace;

/// Node-wise agreement required before timings are reported.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct BenchReport {
    /// Wall-time quotient T_sim / T_rec for each solver.
    pub q_active_set: f64,
    pub q_interior_point: f64,
    /// q_interior_point / q_active_set.
    pub ratio: f64,
    /// Largest node-wise trajectory difference between the two solvers.
    pub max_divergence: f64,
    pub frames: usize,
}

fn with_solver(config: &ScenarioConfig, kind: SolverKind) -> ScenarioConfig {
    let mut c = config.clone();
    c.solver.kind = kind;
    c
}

fn timed_quotient(config: &ScenarioConfig, base: &Path, runs: usize) -> Result<(f64, Trace)> {
    let built = config.build(base)?;
    // Warm-up run (also the equivalence trace).
    let reference = run_scenario_strict(&built)?;
    let mut quotients = Vec::with_capacity(runs);
    for _ in 0..runs {
        let built = config.build(base)?;
        let trace = run_scenario_strict(&built)?;
        quotients.push(trace.time_quotient());
    }
    quotients.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((quotients[quotients.len() / 2], reference))
}

/// Run the benchmark. Fails with `BenchmarkInvalid` when the two solvers
/// do not reproduce the same trajectory.
pub fn bench_solvers(config: &ScenarioConfig, base: &Path) -> Result<BenchReport> {
    let (q_as, trace_as) = timed_quotient(&with_solver(config, SolverKind::ActiveSet), base, 3)?;
    let (q_ip, trace_ip) = timed_quotient(&with_solver(config, SolverKind::InteriorPoint), base, 3)?;
    let max_divergence = trace_as.max_node_distance(&trace_ip)?;
    if max_divergence > EQUIVALENCE_TOLERANCE {
        return Err(Error::BenchmarkInvalid(format!(
            "solver trajectories diverge by {max_divergence:.3e} m (tolerance {EQUIVALENCE_TOLERANCE:.1e})"
        )));
    }
    Ok(BenchReport {
        q_active_set: q_as,
        q_interior_point: q_ip,
        ratio: q_ip / q_as.max(f64::MIN_POSITIVE),
        max_divergence,
        frames: trace_as.frame_count(),
    })
}
