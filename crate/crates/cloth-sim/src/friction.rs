//! Tangent-velocity rows and friction force assembly.
//!
//! Friction acts along the unit relative tangent velocity of each active
//! contact with magnitude μ β, where β = ||∇H' γ|| saturates the Coulomb
//! cone (maximal dissipation). Tangent speeds below the static guard
//! produce an exactly zero row so normalization never blows up; sticking
//! then emerges from the stepping fixed point rather than from the rows.

use crate::math::Vec3;
use crate::rows::SparseRow;

/// Below this relative tangent speed (m/s) a contact contributes no
/// friction row.
pub const STATIC_GUARD: f64 = 1e-8;

/// Geometry of one contact as the friction assembly sees it. The weights
/// are the same signed coefficients as the constraint gradient, so
/// Σ wᵢ vᵢ plus the counterpart term gives the relative velocity of the
/// two contact points.
#[derive(Debug, Clone)]
pub struct ContactGeometry {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
    pub normal: Vec3,
    pub mu: f64,
    /// Velocity contribution of the non-cloth side, signed so that
    /// v_rel = Σ wᵢ vᵢ + counterpart_velocity.
    pub counterpart_velocity: Vec3,
    /// Norm of the constraint gradient row (β = γ · grad_norm).
    pub grad_norm: f64,
    /// Effective inverse mass along the contact, Σ wᵢ²/mᵢ.
    pub inv_mass_eff: f64,
}

/// Per-contact tangent rows plus the scalars needed to scale them.
#[derive(Debug, Clone, Default)]
pub struct FrictionState {
    /// Unit tangent-velocity rows over the 3N vector; exactly zero rows
    /// for contacts under the static guard.
    pub rows: Vec<SparseRow>,
    /// Unit tangent direction at the contact point (zero under the guard).
    pub tangents: Vec<Vec3>,
    /// Pre-normalization relative tangential speeds.
    pub speeds: Vec<f64>,
    pub mus: Vec<f64>,
}

/// Build the relative unit tangent velocity row of every contact.
pub fn tangent_velocities(contacts: &[ContactGeometry], velocities: &[f64]) -> FrictionState {
    let mut state = FrictionState::default();
    for c in contacts {
        let mut v_rel = c.counterpart_velocity;
        for (&n, &w) in c.nodes.iter().zip(&c.weights) {
            v_rel += crate::math::node(velocities, n) * w;
        }
        let v_t = v_rel - c.normal * v_rel.dot(c.normal);
        let speed = v_t.norm();
        if speed > STATIC_GUARD {
            let tangent = v_t / speed;
            let weight_norm = c.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            let entries: Vec<(usize, Vec3)> = c
                .nodes
                .iter()
                .zip(&c.weights)
                .map(|(&n, &w)| (n, tangent * (w / weight_norm)))
                .collect();
            state.rows.push(SparseRow::from_nodes(&entries));
            state.tangents.push(tangent);
            state.speeds.push(speed);
        } else {
            state.rows.push(SparseRow {
                cols: vec![],
                vals: vec![],
            });
            state.tangents.push(Vec3::ZERO);
            state.speeds.push(0.0);
        }
        state.mus.push(c.mu);
    }
    state
}

/// Saturated contact-force magnitudes β = ||∇H' γ|| for each contact.
pub fn saturated_betas(gammas: &[f64], grad_norms: &[f64]) -> Vec<f64> {
    gammas
        .iter()
        .zip(grad_norms)
        .map(|(&g, &n)| g.max(0.0) * n)
        .collect()
}

/// Friction force f = −Σ μᵢ ||∇Hᵢ' γᵢ|| Vᵢ'. Contacts with zero rows or
/// zero multipliers contribute nothing.
pub fn friction_force(
    state: &FrictionState,
    gammas: &[f64],
    grad_norms: &[f64],
    n_dof: usize,
) -> Vec<f64> {
    let betas = saturated_betas(gammas, grad_norms);
    let mut f = vec![0.0; n_dof];
    for ((row, &beta), &mu) in state.rows.iter().zip(&betas).zip(&state.mus) {
        if beta > 0.0 && mu > 0.0 {
            row.axpy_into(-mu * beta, &mut f);
        }
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floor_contact(mu: f64) -> ContactGeometry {
        ContactGeometry {
            nodes: vec![0],
            weights: vec![1.0],
            normal: Vec3::new(0.0, 0.0, 1.0),
            mu,
            counterpart_velocity: Vec3::ZERO,
            grad_norm: 1.0,
            inv_mass_eff: 1.0,
        }
    }

    #[test]
    fn sliding_node_keeps_tangential_direction() {
        let contacts = [floor_contact(0.3)];
        let vel = vec![1.0, 0.0, 0.0];
        let st = tangent_velocities(&contacts, &vel);
        assert_eq!(st.rows[0].cols, vec![0, 1, 2]);
        assert!((st.rows[0].vals[0] - 1.0).abs() < 1e-15);
        assert!((st.speeds[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn purely_normal_motion_gives_zero_row() {
        let contacts = [floor_contact(0.3)];
        let vel = vec![0.0, 0.0, -2.0];
        let st = tangent_velocities(&contacts, &vel);
        assert!(st.rows[0].cols.is_empty());
        assert_eq!(st.speeds[0], 0.0);
    }

    #[test]
    fn rest_on_rotating_sphere_opposes_surface_motion() {
        let r = 0.35;
        let mut c = floor_contact(0.5);
        c.normal = Vec3::new(1.0, 0.0, 0.0); // node at the equator
        c.counterpart_velocity = -Vec3::new(0.0, std::f64::consts::PI * r, 0.0);
        let vel = vec![0.0, 0.0, 0.0];
        let st = tangent_velocities(&[c], &vel);
        let t = st.tangents[0];
        assert!((t - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rows_are_unit_and_orthogonal_to_normal() {
        let c = ContactGeometry {
            nodes: vec![0, 1, 2, 3],
            weights: vec![0.4, 0.6, -0.7, -0.3],
            normal: Vec3::new(0.0, 0.0, 1.0),
            mu: 0.2,
            counterpart_velocity: Vec3::ZERO,
            grad_norm: 1.0,
            inv_mass_eff: 1.0,
        };
        let mut vel = vec![0.0; 12];
        vel[0] = 0.8;
        vel[4] = -0.3;
        vel[8] = 0.1;
        let st = tangent_velocities(&[c.clone()], &vel);
        let row = &st.rows[0];
        assert!((row.norm() - 1.0).abs() < 1e-12);
        // Dot with the constraint gradient direction must vanish.
        let grad: Vec<(usize, Vec3)> = c
            .nodes
            .iter()
            .zip(&c.weights)
            .map(|(&n, &w)| (n, c.normal * w))
            .collect();
        let grad_row = SparseRow::from_nodes(&grad);
        let ones = vec![1.0; 12];
        assert!(row.weighted_dot(&grad_row, &ones).abs() < 1e-10);
    }

    #[test]
    fn force_values_and_superposition() {
        let contacts = [floor_contact(0.5)];
        let vel = vec![3.0, 0.0, 0.0];
        let st = tangent_velocities(&contacts, &vel);
        // No contact force, no friction.
        assert!(friction_force(&st, &[0.0], &[1.0], 3).iter().all(|v| *v == 0.0));
        // μ = 0.5, β = 2 N, tangent (1,0,0) → force (−1,0,0).
        let f = friction_force(&st, &[2.0], &[1.0], 3);
        assert!((f[0] + 1.0).abs() < 1e-14 && f[1] == 0.0 && f[2] == 0.0);

        // Two contacts on one node with opposing tangents and equal β.
        let mut c2 = floor_contact(0.5);
        c2.normal = Vec3::new(0.0, 0.0, 1.0);
        let both = [floor_contact(0.5), c2];
        let st_a = tangent_velocities(&both[..1], &[1.0, 0.0, 0.0]);
        let st_b = tangent_velocities(&both[1..], &[-1.0, 0.0, 0.0]);
        let fa = friction_force(&st_a, &[2.0], &[1.0], 3);
        let fb = friction_force(&st_b, &[2.0], &[1.0], 3);
        for (a, b) in fa.iter().zip(&fb) {
            assert!((a + b).abs() < 1e-14);
        }
    }

    #[test]
    fn dissipation_along_sliding_directions() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let normal = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            )
            .normalized(1e-9)
            .unwrap_or(Vec3::new(0.0, 0.0, 1.0));
            let c = ContactGeometry {
                nodes: vec![0],
                weights: vec![1.0],
                normal,
                mu: rng.gen_range(0.0..2.0),
                counterpart_velocity: Vec3::ZERO,
                grad_norm: 1.0,
                inv_mass_eff: 1.0,
            };
            let vel = vec![
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ];
            let st = tangent_velocities(&[c], &vel);
            let gamma = rng.gen_range(0.0..5.0);
            let f = friction_force(&st, &[gamma], &[1.0], 3);
            // Power against the unnormalized relative tangent velocity.
            let vt_row = &st.rows[0];
            let power: f64 = vt_row.dot_dense(&f) * st.speeds[0];
            assert!(power <= 1e-12);
            // Cone bound: ||f|| ≤ μ β.
            let fn2: f64 = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(fn2 <= st.mus[0] * gamma + 1e-12);
        }
    }
}
