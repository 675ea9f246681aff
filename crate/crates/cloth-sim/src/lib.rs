//! Constrained-dynamics simulation of inextensible textiles.
//!
//! The sheet is discretized into a quad mesh whose first fundamental form
//! is pinned to its rest value (no stretch, no shear). Obstacle contact,
//! self-collision with cloth thickness, and Coulomb friction are resolved
//! together with inextensibility in a single pass per step: the implicit
//! integration yields a sequence of sparse quadratic programs solved by
//! an infeasible-start active-set method with incremental Cholesky
//! updates. An interior-point baseline, a scenario runner, validation
//! metrics and a parameter-fitting harness round out the crate.
//!
//! See the `examples/` directory for one runnable example per capability
//! and the `cloth-sim` binary for the scenario CLI.

pub mod error;
pub mod math;
pub mod mesh;
pub mod rows;
pub mod scenario;
pub mod stepper;

pub mod friction;
pub mod inextensibility;
pub mod audit;
pub mod collision;
pub mod obstacles;
pub mod qp;

pub use error::{Error, Result};
