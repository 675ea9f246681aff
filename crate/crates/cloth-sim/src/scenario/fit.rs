//! Exhaustive grid fitting of (δ, α, μ) against a reference trace: every
//! grid point runs its own simulation (in parallel) and is scored by the
//! time mean of the absolute error. No local optimizer; the full error
//! surface is part of the result.

use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scenario::config::ScenarioConfig;
use crate::scenario::metrics::{error_metrics, ReferenceTrace};
use crate::scenario::runner::run_scenario;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitGridFile {
    pub grid: FitGrid,
}

/// Explicit parameter values per axis.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitGrid {
    pub delta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
}

impl FitGrid {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let file: FitGridFile = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if file.grid.delta.is_empty() || file.grid.alpha.is_empty() || file.grid.mu.is_empty() {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        Ok(file.grid)
    }

    pub fn len(&self) -> usize {
        self.delta.len() * self.alpha.len() * self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Enumerate points in deterministic order: δ outer, α middle, μ inner.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &d in &self.delta {
            for &a in &self.alpha {
                for &m in &self.mu {
                    out.push((d, a, m));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FitSample {
    pub delta: f64,
    pub alpha: f64,
    pub mu: f64,
    /// Mean absolute error; infinite when the simulation failed.
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub best: FitSample,
    pub best_index: usize,
    pub surface: Vec<FitSample>,
}

impl FitResult {
    pub fn write_surface_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("index,delta,alpha,mu,error\n");
        for (i, s) in self.surface.iter().enumerate() {
            out.push_str(&format!(
                "{i},{:.9},{:.9},{:.9},{:.9e}\n",
                s.delta, s.alpha, s.mu, s.error
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Apply one grid point to a config: μ overrides every obstacle friction,
/// δ and α override the material aerodynamics surrogates.
fn apply_point(config: &ScenarioConfig, delta: f64, alpha: f64, mu: f64) -> ScenarioConfig {
    let mut c = config.clone();
    c.material.virtual_mass = delta;
    c.material.damping = alpha;
    for o in &mut c.obstacles {
        use crate::scenario::config::ObstacleSection::*;
        match o {
            Plane { friction, .. }
            | Sphere { friction, .. }
            | Cylinder { friction, .. }
            | NeedleField { friction, .. } => *friction = mu,
        }
    }
    c
}

/// Evaluate every grid point; ties resolve to the lowest enumeration index.
pub fn fit_parameters(
    config: &ScenarioConfig,
    base: &Path,
    reference: &ReferenceTrace,
    grid: &FitGrid,
) -> Result<FitResult> {
    let points = grid.points();
    let surface: Vec<FitSample> = points
        .par_iter()
        .map(|&(delta, alpha, mu)| {
            let error = evaluate_point(config, base, reference, delta, alpha, mu)
                .unwrap_or(f64::INFINITY);
            FitSample {
                delta,
                alpha,
                mu,
                error,
            }
        })
        .collect();
    let mut best_index = 0;
    for (i, s) in surface.iter().enumerate() {
        if s.error < surface[best_index].error {
            best_index = i;
        }
    }
    if surface[best_index].error.is_infinite() {
        return Err(Error::Validation(
            "every grid point failed to simulate".into(),
        ));
    }
    Ok(FitResult {
        best: surface[best_index].clone(),
        best_index,
        surface,
    })
}

fn evaluate_point(
    config: &ScenarioConfig,
    base: &Path,
    reference: &ReferenceTrace,
    delta: f64,
    alpha: f64,
    mu: f64,
) -> Result<f64> {
    let cfg = apply_point(config, delta, alpha, mu);
    let built = cfg.build(base)?;
    let trace = run_scenario(&built).map_err(|(e, _)| e)?;
    let metrics = error_metrics(&trace, reference, &built.scene.mass)?;
    Ok(metrics.mean_e)
}
