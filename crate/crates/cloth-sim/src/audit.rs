//! Post-hoc trace audits, independent of the stepper's own reports:
//! constraint residuals recomputed from raw frames, exact final-state
//! self-intersection checks, and cusp tunneling detection across frames.

use crate::collision::{
    point_triangle_closest, point_triangle_distance, segment_segment_distance, sweep_node_face,
};
use crate::inextensibility::max_residual;
use crate::math::{node, Aabb, Vec3};
use crate::mesh::ClothMesh;
use crate::scenario::trace::Trace;
use crate::stepper::Scene;

/// Residual audit over a whole trace.
#[derive(Debug, Clone, Default)]
pub struct ConstraintAudit {
    /// max over frames of max |C|, m².
    pub max_inextensibility: f64,
    /// min over frames of the smallest obstacle signed distance, m.
    pub min_obstacle_h: f64,
    /// Per-frame series (same length as the trace).
    pub c_series: Vec<f64>,
    pub h_series: Vec<f64>,
}

/// Recompute inextensibility residuals and obstacle clearances from the
/// recorded frames.
pub fn audit_constraints(scene: &Scene, trace: &Trace) -> ConstraintAudit {
    let mut audit = ConstraintAudit {
        min_obstacle_h: f64::INFINITY,
        ..Default::default()
    };
    for (i, frame) in trace.frames.iter().enumerate() {
        let t = trace.times[i];
        let c = max_residual(&scene.mesh, frame);
        audit.max_inextensibility = audit.max_inextensibility.max(c);
        audit.c_series.push(c);
        let pinned: Vec<usize> = scene.pins.iter().map(|p| p.node).collect();
        let mut h_min = f64::INFINITY;
        for obstacle in &scene.obstacles {
            for n in 0..scene.mesh.node_count() {
                if pinned.contains(&n) {
                    continue;
                }
                let (h, _) = obstacle.signed_distance(node(frame, n), t);
                h_min = h_min.min(h);
            }
        }
        if h_min.is_finite() {
            audit.min_obstacle_h = audit.min_obstacle_h.min(h_min);
        }
        audit.h_series.push(if h_min.is_finite() { h_min } else { f64::INFINITY });
    }
    if !audit.min_obstacle_h.is_finite() {
        audit.min_obstacle_h = 0.0;
    }
    audit
}

/// Final-state self-collision audit.
#[derive(Debug, Clone)]
pub struct SelfAudit {
    /// Number of intersecting non-adjacent triangle pairs.
    pub intersections: usize,
    /// Smallest separation over non-adjacent element pairs, m.
    pub min_separation: f64,
}

/// Exact intersection test of two triangles via segment-triangle crossings
/// (suits non-coplanar contact states; coplanar overlap shows up as a
/// near-zero separation instead).
fn tri_tri_intersect(a: [Vec3; 3], b: [Vec3; 3]) -> bool {
    let edges = |t: [Vec3; 3]| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])];
    for (p, q) in edges(a) {
        if segment_hits_triangle(p, q, b) {
            return true;
        }
    }
    for (p, q) in edges(b) {
        if segment_hits_triangle(p, q, a) {
            return true;
        }
    }
    false
}

fn segment_hits_triangle(p: Vec3, q: Vec3, t: [Vec3; 3]) -> bool {
    let n = (t[1] - t[0]).cross(t[2] - t[0]);
    let denom = n.dot(q - p);
    if denom.abs() < 1e-300 {
        return false;
    }
    let s = n.dot(t[0] - p) / denom;
    if !(0.0..=1.0).contains(&s) {
        return false;
    }
    let hit = p + (q - p) * s;
    let (u, v, w) = point_triangle_closest(hit, t[0], t[1], t[2]);
    let closest = t[0] * u + t[1] * v + t[2] * w;
    (closest - hit).norm() < 1e-10
}

/// Audit one frame: triangle-triangle intersections and the minimum
/// separation over all element pairs that share no node.
pub fn audit_self_intersections(mesh: &ClothMesh, frame: &[f64]) -> SelfAudit {
    let tris = &mesh.tris;
    let tri_pos =
        |t: &[usize; 3]| [node(frame, t[0]), node(frame, t[1]), node(frame, t[2])];
    let boxes: Vec<Aabb> = tris
        .iter()
        .map(|t| Aabb::of_points(&tri_pos(t)))
        .collect();

    let mut intersections = 0;
    let mut min_separation = f64::INFINITY;
    for i in 0..tris.len() {
        for j in i + 1..tris.len() {
            if tris[i].iter().any(|n| tris[j].contains(n)) {
                continue;
            }
            if boxes[i].grow(1e-4).overlaps(&boxes[j].grow(1e-4))
                && tri_tri_intersect(tri_pos(&tris[i]), tri_pos(&tris[j]))
            {
                intersections += 1;
            }
        }
    }
    // Separations: edge-edge and node-face over non-adjacent pairs.
    for (i, e1) in mesh.edges.iter().enumerate() {
        for e2 in mesh.edges.iter().skip(i + 1) {
            if e1.iter().any(|n| e2.contains(n)) {
                continue;
            }
            let d = segment_segment_distance(
                node(frame, e1[0]),
                node(frame, e1[1]),
                node(frame, e2[0]),
                node(frame, e2[1]),
            );
            min_separation = min_separation.min(d);
        }
    }
    for n in 0..mesh.node_count() {
        for t in tris {
            if t.contains(&n) {
                continue;
            }
            let d = point_triangle_distance(node(frame, n), node(frame, t[0]), node(frame, t[1]), node(frame, t[2]));
            min_separation = min_separation.min(d);
        }
    }
    SelfAudit {
        intersections,
        min_separation,
    }
}

/// Cusp audit across a whole trace.
#[derive(Debug, Clone)]
pub struct CuspAudit {
    /// Frame-to-frame sweeps in which a cusp ended up past a face.
    pub tunneling_events: usize,
    /// Final-frame minimum distance from any cusp to any nearby face, m.
    pub final_min_distance: f64,
}

/// Check that no cusp passes through the cloth between consecutive frames
/// and measure the final clearances.
pub fn audit_cusps(scene: &Scene, trace: &Trace, eps1: f64) -> CuspAudit {
    let mesh = &scene.mesh;
    let dt = 1.0;
    let mut tunneling = 0;
    for w in trace.frames.windows(2) {
        let (from, to) = (&w[0], &w[1]);
        let mut vel = vec![0.0; from.len()];
        for i in 0..from.len() {
            vel[i] = (to[i] - from[i]) / dt;
        }
        for f in &mesh.tris {
            for q in &scene.cusps {
                let x = [node(from, f[0]), node(from, f[1]), node(from, f[2]), *q];
                let v = [node(&vel, f[0]), node(&vel, f[1]), node(&vel, f[2]), Vec3::ZERO];
                if let Some(hit) = sweep_node_face(x, v, dt, 0.0) {
                    // A crossing only counts as tunneling when the face
                    // ends up beyond the cusp by more than the tolerance.
                    let y = [node(to, f[0]), node(to, f[1]), node(to, f[2])];
                    let n = (y[1] - y[0]).cross(y[2] - y[0]);
                    if let Some(nu) = n.normalized(1e-12) {
                        let x0 = [x[0], x[1], x[2]];
                        let n0 = (x0[1] - x0[0]).cross(x0[2] - x0[0]);
                        let before = n0.dot(*q - x0[0]);
                        let after = nu.dot(*q - y[0]) * n0.norm();
                        // Sign change of the face-plane side beyond eps1.
                        if before.signum() != after.signum()
                            && after.abs() / n0.norm().max(1e-300) > eps1
                        {
                            let _ = hit;
                            tunneling += 1;
                        }
                    }
                }
            }
        }
    }
    let last = trace.frames.last().expect("non-empty trace");
    let mut final_min = f64::INFINITY;
    for q in &scene.cusps {
        for f in &mesh.tris {
            let d = point_triangle_distance(
                *q,
                node(last, f[0]),
                node(last, f[1]),
                node(last, f[2]),
            );
            final_min = final_min.min(d);
        }
    }
    CuspAudit {
        tunneling_events: tunneling,
        final_min_distance: final_min,
    }
}
