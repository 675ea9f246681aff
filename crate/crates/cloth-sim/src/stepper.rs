//! Time integration: implicit-Euler prediction followed by a sequence of
//! quadratic programs that project the step onto the constraint manifold.
//!
//! Each outer iteration re-linearizes inextensibility, refreshes obstacle
//! rows, injects the self-collisions detected along the motion so far, and
//! re-solves with the previous working set as a warm start. Friction is
//! handled as a per-contact impulse budget: every iteration the applied
//! tangential impulse is corrected toward the Coulomb target
//! min(μβ, impulse-to-stick), so the iteration has a genuine fixed point
//! and the accepted step carries exactly one step's worth of friction.
//! Accepted steps satisfy all three stopping criteria; a final ω = 0
//! detection pass guards against missed collisions and triggers the ω
//! backoff schedule when it fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::collision::{ContactRecord, RecordKey};
use crate::error::{Error, Result};
use crate::friction::{ContactGeometry, STATIC_GUARD};
use crate::inextensibility::eval_inext;
use crate::math::{node, set_node, Vec3};
use crate::mesh::{ClothMesh, ClothState, MassMatrix};
use crate::obstacles::{cusp_face_constraints, stick_edge_constraints, ImplicitObstacle, StickObstacle};
use crate::qp::{active_set_solve, interior_point_solve, ActiveSetOptions, QpProblem};
use crate::rows::SparseRow;

/// Solver used for the per-iteration programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    ActiveSet,
    InteriorPoint,
}

/// Step-level tolerances and integration parameters.
#[derive(Debug, Clone, Copy)]
pub struct StepConfig {
    pub dt: f64,
    /// Inextensibility residual bound, m².
    pub eps0: f64,
    /// Penetration bound, m.
    pub eps1: f64,
    /// Increment stagnation bound, m.
    pub eps2: f64,
    pub max_outer: usize,
    /// Proximity parameter for detection, halved on failed verification.
    pub omega: f64,
    pub omega_min: f64,
    pub omega_retries: usize,
    /// Rayleigh (mass-proportional) damping, 1/s.
    pub damping: f64,
    /// Virtual-mass factor scaling the gravitational load.
    pub virtual_mass: f64,
    pub gravity: Vec3,
    pub solver: SolverChoice,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 0.01,
            eps0: 1e-6,
            eps1: 1e-5,
            eps2: 1e-6,
            max_outer: 100,
            omega: 0.45,
            omega_min: 0.05,
            omega_retries: 3,
            damping: 0.0,
            virtual_mass: 0.0,
            gravity: Vec3::new(0.0, 0.0, -9.81),
            solver: SolverChoice::ActiveSet,
        }
    }
}

/// A node following a prescribed trajectory, pinned through equality rows.
#[derive(Debug, Clone)]
pub struct ScriptedNode {
    pub node: usize,
    /// (time, position) keyframes, piecewise-linear.
    pub trajectory: Vec<(f64, Vec3)>,
}

impl ScriptedNode {
    pub fn position_at(&self, t: f64) -> Vec3 {
        match self.trajectory.as_slice() {
            [] => Vec3::ZERO,
            [only] => only.1,
            keys => {
                if t <= keys[0].0 {
                    return keys[0].1;
                }
                if t >= keys[keys.len() - 1].0 {
                    return keys[keys.len() - 1].1;
                }
                let k = keys.partition_point(|(kt, _)| *kt <= t).max(1);
                let (t0, p0) = keys[k - 1];
                let (t1, p1) = keys[k];
                p0 + (p1 - p0) * ((t - t0) / (t1 - t0))
            }
        }
    }
}

/// Everything the stepper needs to know about the world.
#[derive(Debug, Clone)]
pub struct Scene {
    pub mesh: ClothMesh,
    pub mass: MassMatrix,
    pub obstacles: Vec<ImplicitObstacle>,
    /// Cusp points treated like self-collision nodes (needle tips).
    pub cusps: Vec<Vec3>,
    pub cusp_mu: f64,
    pub sticks: Vec<StickObstacle>,
    pub pins: Vec<ScriptedNode>,
    pub self_collision: bool,
    /// Cloth thickness, m.
    pub tau0: f64,
    /// Cloth-on-cloth friction coefficient.
    pub cloth_mu: f64,
    /// Add one obstacle row per face midpoint (for coarse meshes).
    pub face_midpoint_rows: bool,
}

/// Identity of one inequality row across iterations and steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowKey {
    Obstacle { obstacle: usize, node: usize },
    ObstacleFace { obstacle: usize, face: usize },
    Record(RecordKey),
}

/// Post-step diagnostics.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    pub iterations: usize,
    pub c_residual: f64,
    pub h_min: f64,
    pub dx_max: f64,
    /// Active contacts by kind at acceptance: obstacle, self, cusp, stick.
    pub active_contacts: [usize; 4],
    pub exchanges: usize,
    pub factor_updates: usize,
    pub omega_retries: usize,
    pub omega_used: f64,
    /// Friction power against the sliding directions used, in watts (≤ 0).
    pub friction_power: f64,
    /// max over contacts of applied friction impulse minus its cone bound,
    /// in impulse units (≤ 0 when the bound holds).
    pub cone_excess: f64,
    pub verification_failed: bool,
    pub wall_seconds: f64,
}

/// Implicit-Euler prediction: velocities damped by the Rayleigh term,
/// gravity scaled by (1 + δ); scripted nodes are pinned to their targets.
pub fn unconstrained_step(
    state: &ClothState,
    mass: &MassMatrix,
    config: &StepConfig,
    external_force: Option<&[f64]>,
    pins: &[(usize, Vec3)],
) -> Vec<f64> {
    let n = mass.node_mass.len();
    let dt = config.dt;
    let g = config.gravity * (1.0 + config.virtual_mass);
    let mut phi0 = vec![0.0; 3 * n];
    for i in 0..n {
        let v = node(&state.velocities, i);
        let mut acc = g;
        if let Some(f) = external_force {
            acc += node(f, i) / mass.node_mass[i];
        }
        let v_pred = (v + acc * dt) / (1.0 + config.damping * dt);
        set_node(&mut phi0, i, node(&state.positions, i) + v_pred * dt);
    }
    for &(pin, target) in pins {
        set_node(&mut phi0, pin, target);
    }
    phi0
}

/// The stepping engine; owns the warm-start bookkeeping between steps.
pub struct Stepper {
    pub config: StepConfig,
    warm_working: BTreeSet<RowKey>,
    warm_multipliers: BTreeMap<RowKey, f64>,
}

struct Assembly {
    problem: QpProblem,
    keys: Vec<RowKey>,
    geometry: Vec<ContactGeometry>,
    inext_count: usize,
}

struct FrictionBudget {
    /// Cumulative applied tangential displacement per contact.
    applied: BTreeMap<RowKey, Vec3>,
    power: f64,
    cone_excess: f64,
}

impl Stepper {
    pub fn new(config: StepConfig) -> Self {
        Stepper {
            config,
            warm_working: BTreeSet::new(),
            warm_multipliers: BTreeMap::new(),
        }
    }

    /// Working-set keys carried from the previous step (inextensibility
    /// rows are always implicit members).
    pub fn warm_working(&self) -> &BTreeSet<RowKey> {
        &self.warm_working
    }

    pub fn reset_warm_start(&mut self) {
        self.warm_working.clear();
        self.warm_multipliers.clear();
    }

    /// Advance one step.
    pub fn step(&mut self, scene: &Scene, state: &ClothState) -> Result<(ClothState, StepReport)> {
        let clock = Instant::now();
        let dt = self.config.dt;
        let t_n = state.time;
        let t1 = t_n + dt;
        let pins: Vec<(usize, Vec3)> = scene
            .pins
            .iter()
            .map(|p| (p.node, p.position_at(t1)))
            .collect();
        let phi0 = unconstrained_step(state, &scene.mass, &self.config, None, &pins);

        let mut omega = self.config.omega;
        let mut retries = 0;
        let mut seeds: Vec<ContactRecord> = Vec::new();
        loop {
            let attempt = self.attempt(scene, state, &phi0, &pins, t_n, omega, &seeds)?;
            let (phi_star, mut report, working, multipliers, records) = attempt;

            // Final verification with ω = 0: any crossing that ends beyond
            // the penetration tolerance voids the attempt.
            let violations = self.verify_omega_zero(scene, state, &phi_star, t_n);
            let failed: Vec<ContactRecord> = violations
                .into_iter()
                .filter(|r| r.value(&phi_star) < -self.config.eps1)
                .collect();
            if !failed.is_empty() && retries < self.config.omega_retries && omega > self.config.omega_min {
                // Restart the whole iteration at a smaller ω, seeding only
                // the verified crossings; stale proximity rows are dropped.
                omega = (omega * 0.5).max(self.config.omega_min);
                retries += 1;
                seeds = failed;
                continue;
            }
            let _ = &records;
            if !failed.is_empty() {
                log::warn!(
                    "step at t = {t_n:.4}: {} unresolved crossings after ω backoff; accepting flagged state",
                    failed.len()
                );
                report.verification_failed = true;
            }
            report.omega_retries = retries;
            report.omega_used = omega;
            report.wall_seconds = clock.elapsed().as_secs_f64();

            self.warm_working = working;
            self.warm_multipliers = multipliers;

            let mut velocities = vec![0.0; phi_star.len()];
            for i in 0..phi_star.len() {
                velocities[i] = (phi_star[i] - state.positions[i]) / dt;
            }
            let new_state = ClothState {
                positions: phi_star,
                velocities,
                time: t1,
            };
            return Ok((new_state, report));
        }
    }

    /// One full fixed-point attempt at a given ω. Returns the accepted
    /// iterate, diagnostics, the final working set and multipliers (for
    /// warm starting), and the accumulated contact records.
    #[allow(clippy::type_complexity)]
    fn attempt(
        &self,
        scene: &Scene,
        state: &ClothState,
        phi0: &[f64],
        pins: &[(usize, Vec3)],
        t_n: f64,
        omega: f64,
        seeds: &[ContactRecord],
    ) -> Result<(
        Vec<f64>,
        StepReport,
        BTreeSet<RowKey>,
        BTreeMap<RowKey, f64>,
        BTreeMap<RecordKey, ContactRecord>,
    )> {
        let dt = self.config.dt;
        let t1 = t_n + dt;
        let mut records: BTreeMap<RecordKey, ContactRecord> = BTreeMap::new();
        for seed in seeds {
            let mut rec = seed.clone();
            rec.birth_iteration = 0;
            records.insert(rec.key, rec);
        }
        self.detect_into(scene, state, phi0, t_n, omega, 0, &mut records);

        let mut working: BTreeSet<RowKey> = self.warm_working.clone();
        // Contact impulse of this step, accumulated over its programs; the
        // multipliers of a single program only carry that program's
        // correction and vanish at the fixed point.
        let mut accumulated: BTreeMap<RowKey, f64> = BTreeMap::new();
        let mut budget = FrictionBudget {
            applied: BTreeMap::new(),
            power: 0.0,
            cone_excess: 0.0,
        };

        let mut phi_j = phi0.to_vec();
        let mut report = StepReport::default();
        let mut dx_max = f64::INFINITY;

        for j in 0..self.config.max_outer {
            report.iterations = j + 1;
            let mut assembly = self.assemble(scene, &phi_j, pins, t1, &records);

            let c_residual = assembly.problem.eq_values[..assembly.inext_count]
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let h_min = assembly
                .problem
                .ineq_values
                .iter()
                .fold(f64::INFINITY, |m, v| m.min(*v));
            report.c_residual = c_residual;
            report.h_min = if h_min.is_finite() { h_min } else { 0.0 };
            report.dx_max = if dx_max.is_finite() { dx_max } else { 0.0 };

            if c_residual < self.config.eps0
                && report.h_min >= -self.config.eps1
                && dx_max < self.config.eps2
            {
                report.friction_power = budget.power;
                report.cone_excess = budget.cone_excess;
                let survivors: BTreeMap<RowKey, f64> = accumulated
                    .iter()
                    .filter(|(k, &g)| g > 0.0 && working.contains(k))
                    .map(|(k, &g)| (*k, g))
                    .collect();
                report.active_contacts = count_active(&assembly.keys, &survivors);
                return Ok((phi_j, report, working, survivors, records));
            }

            // First program lags friction with the previous step's contact
            // impulses; later programs use this step's running total.
            let beta_source = if j == 0 { &self.warm_multipliers } else { &accumulated };
            let force = self.friction_update(
                scene,
                state,
                &phi_j,
                &assembly,
                beta_source,
                &mut budget,
            );
            assembly.problem.force_offset = force;

            let warm_indices: Vec<usize> = assembly
                .keys
                .iter()
                .enumerate()
                .filter(|(_, k)| working.contains(k))
                .map(|(i, _)| i)
                .collect();
            let sol = match self.config.solver {
                SolverChoice::ActiveSet => active_set_solve(
                    &assembly.problem,
                    Some(&warm_indices),
                    &ActiveSetOptions::default(),
                )?,
                SolverChoice::InteriorPoint => interior_point_solve(&assembly.problem)?,
            };
            report.exchanges += sol.stats.exchanges;
            report.factor_updates += sol.stats.factor_updates;

            dx_max = 0.0;
            for (p, d) in phi_j.iter_mut().zip(&sol.dx) {
                *p += d;
                dx_max = dx_max.max(d.abs());
            }

            working = sol.working_set.iter().map(|&i| assembly.keys[i]).collect();
            for (key, &g) in assembly.keys.iter().zip(&sol.ineq_multipliers) {
                if g > 0.0 {
                    *accumulated.entry(*key).or_insert(0.0) += g;
                }
            }

            self.detect_into(scene, state, &phi_j, t_n, omega, j + 1, &mut records);
        }
        Err(Error::StepFailure {
            time: t_n,
            detail: format!(
                "outer iteration cap {} exceeded (|C| = {:.3e}, min H = {:.3e}, |dx| = {:.3e})",
                self.config.max_outer, report.c_residual, report.h_min, report.dx_max
            ),
        })
    }

    /// Detect self-collisions, cusp hits and stick hits along φⁿ → φ_j and
    /// merge them into the record set, keeping the later detection for
    /// duplicated keys.
    fn detect_into(
        &self,
        scene: &Scene,
        state: &ClothState,
        phi_j: &[f64],
        t_n: f64,
        omega: f64,
        birth: usize,
        records: &mut BTreeMap<RecordKey, ContactRecord>,
    ) {
        let dt = self.config.dt;
        let mut fresh: Vec<ContactRecord> = Vec::new();
        if scene.self_collision {
            fresh.extend(crate::collision::detect_collisions(
                &scene.mesh,
                &state.positions,
                phi_j,
                dt,
                omega,
                scene.tau0,
                birth,
                scene.cloth_mu,
            ));
        }
        if !scene.cusps.is_empty() {
            fresh.extend(cusp_face_constraints(
                &scene.cusps,
                &scene.mesh,
                &state.positions,
                phi_j,
                dt,
                omega,
                scene.tau0,
                birth,
                scene.cusp_mu,
            ));
        }
        for (si, stick) in scene.sticks.iter().enumerate() {
            fresh.extend(stick_edge_constraints(
                stick,
                si,
                &scene.mesh,
                &state.positions,
                phi_j,
                t_n,
                dt,
                omega,
                birth,
            ));
        }
        for rec in fresh {
            records.insert(rec.key, rec);
        }
    }

    /// ω = 0 sweep used for the final verification.
    fn verify_omega_zero(
        &self,
        scene: &Scene,
        state: &ClothState,
        phi_star: &[f64],
        t_n: f64,
    ) -> Vec<ContactRecord> {
        let mut out: BTreeMap<RecordKey, ContactRecord> = BTreeMap::new();
        self.detect_into(scene, state, phi_star, t_n, 0.0, usize::MAX, &mut out);
        out.into_values().collect()
    }

    /// Build the QP at the current iterate: inextensibility and pin rows
    /// as equalities; obstacle rows (one per free node, optionally per
    /// face midpoint) and all contact records as inequalities.
    fn assemble(
        &self,
        scene: &Scene,
        phi_j: &[f64],
        pins: &[(usize, Vec3)],
        t1: f64,
        records: &BTreeMap<RecordKey, ContactRecord>,
    ) -> Assembly {
        let mesh = &scene.mesh;
        let n = mesh.node_count();
        let pinned: BTreeSet<usize> = pins.iter().map(|p| p.0).collect();

        let inext = eval_inext(mesh, phi_j);
        let inext_count = inext.len();
        let mut eq_rows = inext.rows;
        let mut eq_values = inext.values;
        for &(pin, target) in pins {
            let p = node(phi_j, pin);
            let delta = p - target;
            for (axis, v) in [(0, delta.x), (1, delta.y), (2, delta.z)] {
                eq_rows.push(SparseRow {
                    cols: vec![(3 * pin + axis) as u32],
                    vals: vec![1.0],
                });
                eq_values.push(v);
            }
        }

        let mut ineq_rows = Vec::new();
        let mut ineq_values = Vec::new();
        let mut keys = Vec::new();
        let mut geometry = Vec::new();
        for (oi, obstacle) in scene.obstacles.iter().enumerate() {
            for i in 0..n {
                if pinned.contains(&i) {
                    continue; // held nodes are driven by their pin rows
                }
                let p = node(phi_j, i);
                let (h, g) = obstacle.signed_distance(p, t1);
                ineq_rows.push(SparseRow::from_nodes(&[(i, g)]));
                ineq_values.push(h);
                keys.push(RowKey::Obstacle { obstacle: oi, node: i });
                geometry.push(ContactGeometry {
                    nodes: vec![i],
                    weights: vec![1.0],
                    normal: g,
                    mu: obstacle.friction,
                    counterpart_velocity: -obstacle.point_velocity(p, t1),
                    grad_norm: 1.0,
                    inv_mass_eff: 1.0 / scene.mass.node_mass[i],
                });
            }
            if scene.face_midpoint_rows {
                for (fi, f) in mesh.tris.iter().enumerate() {
                    if f.iter().any(|i| pinned.contains(i)) {
                        continue;
                    }
                    let centroid = (node(phi_j, f[0]) + node(phi_j, f[1]) + node(phi_j, f[2])) / 3.0;
                    let (h, g) = obstacle.signed_distance(centroid, t1);
                    let w = 1.0 / 3.0;
                    ineq_rows.push(SparseRow::from_nodes(&[
                        (f[0], g * w),
                        (f[1], g * w),
                        (f[2], g * w),
                    ]));
                    ineq_values.push(h);
                    keys.push(RowKey::ObstacleFace { obstacle: oi, face: fi });
                    let inv_mass_eff: f64 =
                        f.iter().map(|&i| w * w / scene.mass.node_mass[i]).sum();
                    geometry.push(ContactGeometry {
                        nodes: f.to_vec(),
                        weights: vec![w; 3],
                        normal: g,
                        mu: obstacle.friction,
                        counterpart_velocity: -obstacle.point_velocity(centroid, t1),
                        grad_norm: (3.0f64).sqrt() * w,
                        inv_mass_eff,
                    });
                }
            }
        }
        for rec in records.values() {
            ineq_rows.push(rec.gradient_row());
            ineq_values.push(rec.value(phi_j));
            keys.push(RowKey::Record(rec.key));
            let weight_norm = rec.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            geometry.push(ContactGeometry {
                nodes: rec.nodes.clone(),
                weights: rec.weights.clone(),
                normal: rec.normal,
                mu: rec.mu,
                counterpart_velocity: rec.counterpart_velocity,
                grad_norm: weight_norm,
                inv_mass_eff: rec.inv_mass_effective(&scene.mass.node_mass),
            });
        }

        Assembly {
            problem: QpProblem {
                inv_mass: scene.mass.inv_diag(),
                eq_rows,
                eq_values,
                ineq_rows,
                ineq_values,
                force_offset: vec![0.0; 3 * n],
            },
            keys,
            geometry,
            inext_count,
        }
    }

    /// Correct the per-contact friction impulse toward its Coulomb target
    /// and return the resulting force offset for the next program.
    fn friction_update(
        &self,
        scene: &Scene,
        state: &ClothState,
        phi_j: &[f64],
        assembly: &Assembly,
        multipliers: &BTreeMap<RowKey, f64>,
        budget: &mut FrictionBudget,
    ) -> Vec<f64> {
        let dt = self.config.dt;
        let n_dof = 3 * scene.mass.node_mass.len();
        let mut force = vec![0.0; n_dof];
        budget.power = 0.0;
        budget.cone_excess = f64::NEG_INFINITY;
        let mut any = false;

        for (idx, geo) in assembly.geometry.iter().enumerate() {
            let key = assembly.keys[idx];
            let applied = budget.applied.get(&key).copied().unwrap_or(Vec3::ZERO);
            if geo.mu <= 0.0 && applied == Vec3::ZERO {
                continue;
            }
            let gamma = multipliers.get(&key).copied().unwrap_or(0.0);
            let beta = gamma.max(0.0) * geo.grad_norm;

            // Relative tangential displacement over the step so far.
            let mut u = geo.counterpart_velocity * dt;
            for (&ni, &w) in geo.nodes.iter().zip(&geo.weights) {
                u += (node(phi_j, ni) - node(&state.positions, ni)) * w;
            }
            let u_t = u - geo.normal * u.dot(geo.normal);
            let applied_t = applied - geo.normal * applied.dot(geo.normal);
            let u_free = u_t - applied_t;

            let cap = geo.mu * beta * geo.inv_mass_eff;
            let slide = u_free.norm();
            let target = if slide > STATIC_GUARD * dt || slide > 1e-14 {
                match u_free.normalized(1e-300) {
                    Some(dir) => dir * (-cap.min(slide)),
                    None => Vec3::ZERO,
                }
            } else {
                Vec3::ZERO
            };

            let correction = target - applied;
            if correction.norm() > 0.0 {
                let m_eff = 1.0 / geo.inv_mass_eff;
                for (&ni, &w) in geo.nodes.iter().zip(&geo.weights) {
                    let f = correction * (m_eff * w);
                    force[3 * ni] += f.x;
                    force[3 * ni + 1] += f.y;
                    force[3 * ni + 2] += f.z;
                }
            }
            budget.applied.insert(key, target);

            let m_eff = 1.0 / geo.inv_mass_eff;
            // Power of the applied friction against the sliding direction
            // it was computed from; nonpositive by construction.
            budget.power += m_eff * target.dot(u_free) / (dt * dt * dt);
            budget.cone_excess = budget.cone_excess.max(m_eff * target.norm() - geo.mu * beta);
            any = true;
        }
        if !any {
            budget.cone_excess = 0.0;
        }
        force
    }
}

fn count_active(keys: &[RowKey], multipliers: &BTreeMap<RowKey, f64>) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for key in keys {
        if multipliers.get(key).copied().unwrap_or(0.0) > 0.0 {
            match key {
                RowKey::Obstacle { .. } | RowKey::ObstacleFace { .. } => counts[0] += 1,
                RowKey::Record(RecordKey::EdgeEdge { .. })
                | RowKey::Record(RecordKey::NodeFace { .. }) => counts[1] += 1,
                RowKey::Record(RecordKey::CuspFace { .. }) => counts[2] += 1,
                RowKey::Record(RecordKey::StickEdge { .. }) => counts[3] += 1,
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obstacles::ObstacleShape;

    fn floor_scene(nx: usize, ny: usize, size: f64, density: f64, mu: f64) -> Scene {
        let mesh = ClothMesh::grid(nx, ny, size, size).unwrap();
        let mass = MassMatrix::lumped(&mesh, density).unwrap();
        Scene {
            mesh,
            mass,
            obstacles: vec![ImplicitObstacle::fixed(
                ObstacleShape::Plane {
                    point: Vec3::ZERO,
                    normal: Vec3::new(0.0, 0.0, 1.0),
                },
                mu,
            )],
            cusps: vec![],
            cusp_mu: 0.0,
            sticks: vec![],
            pins: vec![],
            self_collision: false,
            tau0: 0.002,
            cloth_mu: 0.0,
            face_midpoint_rows: false,
        }
    }

    #[test]
    fn prediction_matches_closed_form() {
        let mesh = ClothMesh::grid(2, 2, 1.0, 1.0).unwrap();
        let mass = MassMatrix::lumped(&mesh, 1.0).unwrap();
        let mut state = ClothState::at_rest(&mesh);
        for i in 0..mesh.node_count() {
            state.velocities[3 * i] = 0.5;
        }
        let mut config = StepConfig::default();
        config.dt = 0.01;
        let phi0 = unconstrained_step(&state, &mass, &config, None, &[]);
        for i in 0..mesh.node_count() {
            let p = node(&state.positions, i);
            let q = node(&phi0, i);
            assert!((q.x - (p.x + 0.01 * 0.5)).abs() < 1e-15);
            assert!((q.z - (p.z - 0.01 * 0.01 * 9.81)).abs() < 1e-15);
        }

        // Virtual mass doubles the gravitational term in the prediction.
        config.virtual_mass = 1.0;
        let phi0 = unconstrained_step(&state, &mass, &config, None, &[]);
        for i in 0..mesh.node_count() {
            let q = node(&phi0, i);
            assert!((q.z - (-0.01 * 0.01 * 2.0 * 9.81)).abs() < 1e-15);
        }

        // Pinned nodes track their targets exactly.
        config.virtual_mass = 0.0;
        let target = Vec3::new(9.0, 9.0, 9.0);
        let phi0 = unconstrained_step(&state, &mass, &config, None, &[(0, target)]);
        assert_eq!(node(&phi0, 0), target);
    }

    #[test]
    fn resting_cloth_stays_put_and_supports_its_weight() {
        let scene = floor_scene(3, 3, 1.0, 0.3, 0.4);
        let state = ClothState::at_rest(&scene.mesh);
        let mut stepper = Stepper::new(StepConfig::default());
        let (next, report) = stepper.step(&scene, &state).unwrap();
        for (a, b) in next.positions.iter().zip(&state.positions) {
            assert!((a - b).abs() < 1e-9, "resting cloth moved");
        }
        // Σ γ ||∇H|| / dt² balances the total weight.
        let dt = stepper.config.dt;
        let total_normal: f64 = stepper
            .warm_multipliers
            .values()
            .sum::<f64>()
            / (dt * dt);
        let weight = scene.mass.total() * 9.81;
        assert!(
            (total_normal - weight).abs() < 1e-6 * weight,
            "normal force {total_normal} vs weight {weight}"
        );
        assert!(report.h_min >= -stepper.config.eps1);

        // Second step: persistent contact, warm start, no exchanges.
        let (_, report2) = stepper.step(&scene, &next).unwrap();
        assert_eq!(report2.exchanges, 0, "warm-started resting step must not exchange");
    }

    #[test]
    fn impact_is_inelastic() {
        let scene = floor_scene(3, 3, 0.2, 0.1, 0.3);
        let mut state = ClothState::at_rest(&scene.mesh);
        for i in 0..scene.mesh.node_count() {
            state.positions[3 * i + 2] = 0.05;
        }
        let mut stepper = Stepper::new(StepConfig::default());
        let mut touched = false;
        for _ in 0..30 {
            let (next, report) = stepper.step(&scene, &state).unwrap();
            assert!(report.h_min >= -stepper.config.eps1);
            if touched {
                // No rebound: every node stays within a millimeter of the floor.
                for i in 0..scene.mesh.node_count() {
                    assert!(next.positions[3 * i + 2] < 1e-3, "node bounced");
                }
            }
            if report.active_contacts[0] > 0 {
                touched = true;
            }
            state = next;
        }
        assert!(touched, "cloth never reached the floor");
        // Terminal normal velocity is below the stagnation rate.
        let dt = stepper.config.dt;
        for i in 0..scene.mesh.node_count() {
            assert!(state.velocities[3 * i + 2].abs() <= stepper.config.eps2 / dt * 10.0);
        }
    }

    #[test]
    fn pinned_swing_preserves_inextensibility() {
        let mesh = ClothMesh::grid(3, 3, 0.3, 0.3).unwrap();
        let mass = MassMatrix::lumped(&mesh, 0.1).unwrap();
        // Hang in the x-z plane: rotate rest positions so gravity bends it.
        let mut state = ClothState::at_rest(&mesh);
        for i in 0..mesh.node_count() {
            let p = node(&state.positions, i);
            set_node(&mut state.positions, i, Vec3::new(p.x, 0.0, p.y));
        }
        let top_left = mesh.grid_node(0, 2);
        let top_right = mesh.grid_node(2, 2);
        let pins = vec![
            ScriptedNode {
                node: top_left,
                trajectory: vec![(0.0, node(&state.positions, top_left))],
            },
            ScriptedNode {
                node: top_right,
                trajectory: vec![(0.0, node(&state.positions, top_right))],
            },
        ];
        let scene = Scene {
            mesh,
            mass,
            obstacles: vec![],
            cusps: vec![],
            cusp_mu: 0.0,
            sticks: vec![],
            pins,
            self_collision: false,
            tau0: 0.002,
            cloth_mu: 0.0,
            face_midpoint_rows: false,
        };
        let mut stepper = Stepper::new(StepConfig {
            damping: 0.5,
            ..StepConfig::default()
        });
        let mut state = state;
        for _ in 0..50 {
            let (next, report) = stepper.step(&scene, &state).unwrap();
            assert!(report.c_residual < stepper.config.eps0, "stretch leaked: {}", report.c_residual);
            let drift = (node(&next.positions, top_left) - node(&state.positions, top_left)).norm();
            assert!(drift < 1e-10, "pinned corner drifted by {drift}");
            state = next;
        }
    }

    #[test]
    fn stepping_is_deterministic() {
        let run = || {
            let scene = floor_scene(3, 3, 0.4, 0.2, 0.5);
            let mut state = ClothState::at_rest(&scene.mesh);
            for i in 0..scene.mesh.node_count() {
                state.positions[3 * i + 2] = 0.03;
                state.velocities[3 * i] = 0.4;
            }
            let mut stepper = Stepper::new(StepConfig::default());
            for _ in 0..20 {
                let (next, _) = stepper.step(&scene, &state).unwrap();
                state = next;
            }
            state.positions
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sliding_block_decelerates_at_coulomb_rate() {
        // A patch sliding on a frictional floor loses μ g of speed per
        // second, independent of how many inner iterations each step took.
        let mu = 0.3;
        let scene = floor_scene(3, 3, 0.2, 0.2, mu);
        let mut state = ClothState::at_rest(&scene.mesh);
        let v0 = 1.0;
        for i in 0..scene.mesh.node_count() {
            state.velocities[3 * i] = v0;
        }
        let mut stepper = Stepper::new(StepConfig::default());
        let steps = 20;
        for _ in 0..steps {
            let (next, report) = stepper.step(&scene, &state).unwrap();
            assert!(report.friction_power <= 1e-12);
            assert!(report.cone_excess <= 1e-12);
            state = next;
        }
        let t = steps as f64 * stepper.config.dt;
        let expect = v0 - mu * 9.81 * t;
        let got = state.velocities[0];
        assert!(
            (got - expect).abs() < 0.05 * v0,
            "sliding speed {got} vs Coulomb prediction {expect}"
        );
    }
}
