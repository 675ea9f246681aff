//! Scenario-runner command line: simulate, validate, fit, bench.
//!
//! Exit codes: 0 success, 2 configuration error, 3 simulation failure,
//! 4 invalid benchmark.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::scenario::config::{ScenarioConfig, SolverKind};
use crate::scenario::fit::FitGrid;
use crate::scenario::metrics::{error_metrics, ReferenceTrace};
use crate::scenario::{bench_solvers, fit_parameters, run_scenario};

#[derive(Parser)]
#[command(
    name = "cloth-sim",
    about = "Inextensible cloth simulation with unified contact and friction",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and record frames and step diagnostics.
    Simulate {
        /// Scenario config (TOML).
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Also export one wavefront mesh per frame.
        #[arg(long)]
        export_obj: bool,
        /// Export marker positions as a reference trace (with optional
        /// noise via --marker-noise).
        #[arg(long)]
        export_reference: bool,
        /// Gaussian marker noise for --export-reference, meters.
        #[arg(long, default_value_t = 0.0)]
        marker_noise: f64,
    },
    /// Compare a recorded run against a reference trace.
    Validate {
        config: PathBuf,
        /// Reference marker frames (binary dump).
        reference: PathBuf,
        /// Mask sidecar CSV; defaults to <reference>.mask.csv when present.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Grid-fit (delta, alpha, mu) against a reference trace.
    Fit {
        config: PathBuf,
        reference: PathBuf,
        /// Grid definition (TOML with [grid] delta/alpha/mu arrays).
        grid: PathBuf,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Time the active-set solver against the interior-point baseline.
    Bench {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Solver override.
    #[arg(long)]
    solver: Option<SolverArg>,
    /// Proximity parameter override (0 ≤ ω < 0.5).
    #[arg(long)]
    omega: Option<f64>,
    /// Cloth thickness override, meters.
    #[arg(long)]
    thickness: Option<f64>,
    /// Seed for randomized outputs (marker noise).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    ActiveSet,
    InteriorPoint,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Validation(_) => 2,
        Error::BenchmarkInvalid(_) => 4,
        _ => 3,
    }
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<(ScenarioConfig, PathBuf), Error> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(solver) = overrides.solver {
        cfg.solver.kind = match solver {
            SolverArg::ActiveSet => SolverKind::ActiveSet,
            SolverArg::InteriorPoint => SolverKind::InteriorPoint,
        };
    }
    if let Some(omega) = overrides.omega {
        cfg.solver.omega = omega;
    }
    if let Some(thickness) = overrides.thickness {
        cfg.material.thickness = thickness;
    }
    cfg.validate()?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((cfg, base))
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            overrides,
            export_obj,
            export_reference,
            marker_noise,
        } => {
            let (cfg, base) = load_config(&config, &overrides)?;
            let built = cfg.build(&base)?;
            std::fs::create_dir_all(&overrides.out_dir)?;
            println!(
                "simulating '{}': {} nodes, {} frames at dt = {}",
                built.name,
                built.scene.mesh.node_count(),
                (built.duration / built.step.dt).round() as usize + 1,
                built.step.dt
            );
            let trace = match run_scenario(&built) {
                Ok(t) => t,
                Err((e, partial)) => {
                    // Keep the partial trace for post-mortem inspection.
                    let _ = partial.write_frames(&overrides.out_dir.join("frames_partial.bin"));
                    let _ = partial.write_digests(&overrides.out_dir.join("steps_partial.csv"));
                    return Err(e);
                }
            };
            trace.write_frames(&overrides.out_dir.join("frames.bin"))?;
            trace.write_digests(&overrides.out_dir.join("steps.csv"))?;
            if export_obj {
                trace.write_wavefront_frames(&built.scene.mesh, &overrides.out_dir.join("obj"))?;
            }
            if export_reference {
                let reference = ReferenceTrace::from_trace(
                    &trace,
                    &built.marker_nodes,
                    marker_noise,
                    overrides.seed,
                );
                reference.write(
                    &overrides.out_dir.join("reference.bin"),
                    &overrides.out_dir.join("reference.bin.mask.csv"),
                )?;
            }
            let worst_c = trace
                .digests
                .iter()
                .fold(0.0f64, |m, d| m.max(d.c_residual));
            let worst_h = trace
                .digests
                .iter()
                .fold(f64::INFINITY, |m, d| m.min(d.h_min));
            println!(
                "done: wall {:.2}s (q = {:.3}), max|C| = {:.2e} m², min H = {:.2e} m",
                trace.sim_seconds,
                trace.time_quotient(),
                worst_c,
                worst_h
            );
            Ok(())
        }
        Command::Validate {
            config,
            reference,
            mask,
            overrides,
        } => {
            let (cfg, base) = load_config(&config, &overrides)?;
            let built = cfg.build(&base)?;
            let mask_path = mask.or_else(|| {
                let side = reference.with_extension("bin.mask.csv");
                side.exists().then_some(side)
            });
            let refr = ReferenceTrace::read(
                &reference,
                mask_path.as_deref(),
                built.marker_nodes.clone(),
            )?;
            let trace = run_scenario(&built).map_err(|(e, _)| e)?;
            let metrics = error_metrics(&trace, &refr, &built.scene.mass)?;
            std::fs::create_dir_all(&overrides.out_dir)?;
            metrics.write_csv(&trace.times, &overrides.out_dir.join("metrics.csv"))?;
            println!(
                "mean absolute error: {:.4} cm over {} frames ({} markers)",
                metrics.mean_e * 100.0,
                metrics.e.len(),
                refr.marker_nodes.len()
            );
            Ok(())
        }
        Command::Fit {
            config,
            reference,
            grid,
            mask,
            overrides,
        } => {
            let (cfg, base) = load_config(&config, &overrides)?;
            let built = cfg.build(&base)?;
            let mask_path = mask.or_else(|| {
                let side = reference.with_extension("bin.mask.csv");
                side.exists().then_some(side)
            });
            let refr = ReferenceTrace::read(
                &reference,
                mask_path.as_deref(),
                built.marker_nodes.clone(),
            )?;
            let grid = FitGrid::load(&grid)?;
            println!("fitting over {} grid points...", grid.len());
            let result = fit_parameters(&cfg, &base, &refr, &grid)?;
            std::fs::create_dir_all(&overrides.out_dir)?;
            result.write_surface_csv(&overrides.out_dir.join("fit_surface.csv"))?;
            println!(
                "best: delta = {:.4}, alpha = {:.4}, mu = {:.4} (error {:.4} cm)",
                result.best.delta,
                result.best.alpha,
                result.best.mu,
                result.best.error * 100.0
            );
            Ok(())
        }
        Command::Bench { config, overrides } => {
            let (cfg, base) = load_config(&config, &overrides)?;
            let report = bench_solvers(&cfg, &base)?;
            std::fs::create_dir_all(&overrides.out_dir)?;
            let summary = format!(
                "frames: {}\nq active-set: {:.4}\nq interior-point: {:.4}\nratio: {:.2}\nmax trajectory divergence: {:.3e} m\n",
                report.frames,
                report.q_active_set,
                report.q_interior_point,
                report.ratio,
                report.max_divergence
            );
            std::fs::write(overrides.out_dir.join("bench.txt"), &summary)?;
            print!("{summary}");
            Ok(())
        }
    }
}
