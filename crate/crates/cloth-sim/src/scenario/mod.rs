//! Scenario configuration, execution, validation metrics, parameter
//! fitting and the solver benchmark.

pub mod bench;
pub mod config;
pub mod fit;
pub mod metrics;
pub mod runner;
pub mod trace;

pub use bench::{bench_solvers, BenchReport};
pub use config::{BuiltScenario, ScenarioConfig};
pub use fit::{fit_parameters, FitGrid, FitResult};
pub use metrics::{error_metrics, MetricsReport, ReferenceTrace};
pub use runner::{run_scenario, run_scenario_strict};
pub use trace::{StepDigest, Trace};
