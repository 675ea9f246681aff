//! Inextensibility constraints: per quad, the discrete first fundamental
//! form at the quad center minus its rest value, with analytic sparse
//! gradients. Three residuals per quad (E, F, G) keep both dimensions and
//! shear of the sheet fixed; residuals are quadratic in positions so the
//! gradient rows are linear and the constraint count stays below 3N.

use crate::math::node;
use crate::mesh::ClothMesh;
use crate::rows::{ConstraintBlock, ConstraintKind, SparseRow};

/// Evaluated inextensibility constraints: values and gradient rows, three
/// per quad in (E, F, G) order.
pub type InextConstraintSet = ConstraintBlock;

/// Evaluate C(positions) and its gradient.
pub fn eval_inext(mesh: &ClothMesh, positions: &[f64]) -> InextConstraintSet {
    assert_eq!(positions.len(), mesh.dof(), "position vector length mismatch");
    let mut values = Vec::with_capacity(3 * mesh.quads.len());
    let mut rows = Vec::with_capacity(3 * mesh.quads.len());
    for (q, rest) in mesh.quads.iter().zip(&mesh.rest_metric) {
        let p00 = node(positions, q[0]);
        let p10 = node(positions, q[1]);
        let p11 = node(positions, q[2]);
        let p01 = node(positions, q[3]);
        let d_xi = (p10 - p00 + p11 - p01) * 0.5;
        let d_eta = (p01 - p00 + p11 - p10) * 0.5;

        values.push(d_xi.dot(d_xi) - rest.e);
        rows.push(SparseRow::from_nodes(&[
            (q[0], -d_xi),
            (q[1], d_xi),
            (q[2], d_xi),
            (q[3], -d_xi),
        ]));

        values.push(d_xi.dot(d_eta) - rest.f);
        rows.push(SparseRow::from_nodes(&[
            (q[0], (d_eta + d_xi) * -0.5),
            (q[1], (d_eta - d_xi) * 0.5),
            (q[2], (d_eta + d_xi) * 0.5),
            (q[3], (d_xi - d_eta) * 0.5),
        ]));

        values.push(d_eta.dot(d_eta) - rest.g);
        rows.push(SparseRow::from_nodes(&[
            (q[0], -d_eta),
            (q[1], -d_eta),
            (q[2], d_eta),
            (q[3], d_eta),
        ]));
    }
    ConstraintBlock {
        kind: ConstraintKind::Inextensibility,
        values,
        rows,
    }
}

/// Largest residual magnitude, in m².
pub fn max_residual(mesh: &ClothMesh, positions: &[f64]) -> f64 {
    eval_inext(mesh, positions)
        .values
        .iter()
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Compare the analytic gradient against central finite differences with
/// step `h`; returns the maximum absolute deviation over all entries.
pub fn inext_gradient_check(mesh: &ClothMesh, positions: &[f64], h: f64) -> f64 {
    assert!(h > 0.0);
    let base = eval_inext(mesh, positions);
    let mut worst: f64 = 0.0;
    let mut perturbed = positions.to_vec();
    for col in 0..positions.len() {
        perturbed[col] = positions[col] + h;
        let plus = eval_inext(mesh, &perturbed);
        perturbed[col] = positions[col] - h;
        let minus = eval_inext(mesh, &perturbed);
        perturbed[col] = positions[col];
        for (row_i, row) in base.rows.iter().enumerate() {
            let analytic = row
                .cols
                .iter()
                .position(|&c| c as usize == col)
                .map_or(0.0, |k| row.vals[k]);
            let fd = (plus.values[row_i] - minus.values[row_i]) / (2.0 * h);
            worst = worst.max((analytic - fd).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use crate::mesh::ClothMesh;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rotate_translate(positions: &[f64], angle: f64, axis: Vec3, t: Vec3) -> Vec<f64> {
        // Rodrigues rotation about a unit axis, then translation.
        let k = axis.normalized(1e-300).unwrap();
        let (s, c) = angle.sin_cos();
        let mut out = vec![0.0; positions.len()];
        for i in 0..positions.len() / 3 {
            let p = node(positions, i);
            let r = p * c + k.cross(p) * s + k * (k.dot(p) * (1.0 - c)) + t;
            out[3 * i] = r.x;
            out[3 * i + 1] = r.y;
            out[3 * i + 2] = r.z;
        }
        out
    }

    #[test]
    fn rest_configuration_has_zero_residual() {
        let mesh = ClothMesh::grid(5, 4, 0.8, 0.6).unwrap();
        assert_eq!(max_residual(&mesh, &mesh.rest_flat()), 0.0);
    }

    #[test]
    fn isometry_invariance() {
        let mesh = ClothMesh::grid(4, 4, 1.0, 1.0).unwrap();
        let moved = rotate_translate(
            &mesh.rest_flat(),
            0.7,
            Vec3::new(1.0, 2.0, -0.5),
            Vec3::new(3.0, -1.0, 2.0),
        );
        assert!(max_residual(&mesh, &moved) < 1e-12);
    }

    #[test]
    fn uniform_scaling_residual_is_closed_form() {
        let mesh = ClothMesh::grid(4, 3, 1.2, 0.9).unwrap();
        let s = 1.3;
        let scaled: Vec<f64> = mesh.rest_flat().iter().map(|v| v * s).collect();
        let set = eval_inext(&mesh, &scaled);
        for (qi, rest) in mesh.rest_metric.iter().enumerate() {
            let expect = [
                (s * s - 1.0) * rest.e,
                (s * s - 1.0) * rest.f,
                (s * s - 1.0) * rest.g,
            ];
            for k in 0..3 {
                assert!(
                    (set.values[3 * qi + k] - expect[k]).abs() < 1e-12,
                    "quad {qi} component {k}"
                );
            }
        }
    }

    #[test]
    fn row_sparsity_touches_only_quad_nodes() {
        let mesh = ClothMesh::grid(5, 5, 1.0, 1.0).unwrap();
        let set = eval_inext(&mesh, &mesh.rest_flat());
        for (qi, q) in mesh.quads.iter().enumerate() {
            for k in 0..3 {
                let row = &set.rows[3 * qi + k];
                assert_eq!(row.cols.len(), 12);
                for &c in &row.cols {
                    assert!(q.contains(&((c / 3) as usize)));
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
        let rest = mesh.rest_flat();
        assert!(inext_gradient_check(&mesh, &rest, 1e-6) < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let perturbed: Vec<f64> = rest.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
        assert!(inext_gradient_check(&mesh, &perturbed, 1e-6) < 1e-5);
    }

    #[test]
    fn translation_leaves_gradient_unchanged() {
        let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let state: Vec<f64> = mesh.rest_flat().iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        let shifted: Vec<f64> = state
            .chunks(3)
            .flat_map(|p| [p[0] + 1.5, p[1] - 2.0, p[2] + 0.25])
            .collect();
        let a = eval_inext(&mesh, &state);
        let b = eval_inext(&mesh, &shifted);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.cols, rb.cols);
            // Differences of translated coordinates round in the last ulp.
            for (va, vb) in ra.vals.iter().zip(&rb.vals) {
                assert!((va - vb).abs() <= 1e-15 * (1.0 + va.abs()));
            }
        }
    }

    #[test]
    fn gradient_check_on_large_coordinates() {
        let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state: Vec<f64> = (0..mesh.dof()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        assert!(inext_gradient_check(&mesh, &state, 1e-6) < 1e-5);
    }
}
