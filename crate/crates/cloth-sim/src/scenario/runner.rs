//! Scenario execution: step the scene for its full duration, recording
//! every frame. A step failure aborts with the partial trace attached to
//! the error context so the CLI can still dump diagnostics.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::scenario::config::BuiltScenario;
use crate::scenario::trace::{StepDigest, Trace};
use crate::stepper::Stepper;

/// Run to completion. Returns the trace; on step failure the partial
/// trace is returned alongside the error.
pub fn run_scenario(built: &BuiltScenario) -> std::result::Result<Trace, (Error, Trace)> {
    let steps = (built.duration / built.step.dt).round() as usize;
    let mut stepper = Stepper::new(built.step);
    let mut state = built.initial.clone();
    let mut trace = Trace {
        times: vec![state.time],
        frames: vec![state.positions.clone()],
        digests: Vec::with_capacity(steps),
        sim_seconds: 0.0,
        recorded_seconds: built.duration,
    };
    let clock = Instant::now();
    for frame in 1..=steps {
        match stepper.step(&built.scene, &state) {
            Ok((next, report)) => {
                trace.times.push(next.time);
                trace.frames.push(next.positions.clone());
                trace.digests.push(StepDigest::from(&report));
                state = next;
            }
            Err(e) => {
                trace.sim_seconds = clock.elapsed().as_secs_f64();
                return Err((
                    Error::SimulationFailure {
                        frame,
                        source: Box::new(e),
                    },
                    trace,
                ));
            }
        }
    }
    trace.sim_seconds = clock.elapsed().as_secs_f64();
    Ok(trace)
}

/// Convenience wrapper that discards the partial trace on failure.
pub fn run_scenario_strict(built: &BuiltScenario) -> Result<Trace> {
    run_scenario(built).map_err(|(e, _)| e)
}
