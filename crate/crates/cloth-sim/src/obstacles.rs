//! Analytic obstacles: implicit surfaces evaluated in signed-distance-like
//! form (value and gradient rescaled by the gradient norm so tolerances
//! and thickness offsets carry length units), rigid motion scripts with
//! point-velocity fields, the cusp constraints of the needle field, and
//! the moving stick handled as swept edge-edge contacts.

use std::f64::consts::PI;
use std::path::Path;

use crate::collision::{
    orient, segment_segment_closest, sweep_edge_edge, sweep_node_face, ContactRecord, PairKind,
    RecordKey,
};
use crate::error::{Error, Result};
use crate::math::{node, Aabb, Vec3};
use crate::mesh::ClothMesh;
use crate::rows::{ConstraintBlock, ConstraintKind, SparseRow};

#[derive(Debug, Clone)]
pub enum ObstacleShape {
    /// Half space above the plane through `point` with outward `normal`.
    Plane { point: Vec3, normal: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    /// Infinite cylinder around the line through `point` with direction `axis`.
    Cylinder { point: Vec3, axis: Vec3, radius: f64 },
    /// Needle field c1 c2 z − sin(c1 x) sin(c1 y) ≥ 0.
    NeedleField { c1: f64, c2: f64 },
}

/// Rigid placement over time: piecewise-linear translation keyframes plus
/// an optional scripted rotation (velocity field only; shapes stay
/// rotationally symmetric about their own axis).
#[derive(Debug, Clone, Default)]
pub struct MotionScript {
    /// (time, offset) keyframes, strictly increasing times. Empty = static.
    pub translation: Vec<(f64, Vec3)>,
    pub rotation: Option<RotationScript>,
}

#[derive(Debug, Clone)]
pub struct RotationScript {
    /// Unit axis through the shape's reference point.
    pub axis: Vec3,
    pub start: f64,
    pub end: f64,
    /// Signed angular speed in rad/s while t in [start, end].
    pub angular_velocity: f64,
}

impl MotionScript {
    pub fn offset_at(&self, t: f64) -> Vec3 {
        piecewise_linear(&self.translation, t)
    }

    /// Translation velocity by finite differences of the placement.
    pub fn translation_velocity(&self, t: f64) -> Vec3 {
        if self.translation.len() < 2 {
            return Vec3::ZERO;
        }
        let h = 1e-6;
        (self.offset_at(t + h) - self.offset_at(t - h)) / (2.0 * h)
    }
}

fn piecewise_linear(keys: &[(f64, Vec3)], t: f64) -> Vec3 {
    match keys {
        [] => Vec3::ZERO,
        [only] => only.1,
        _ => {
            if t <= keys[0].0 {
                return keys[0].1;
            }
            if t >= keys[keys.len() - 1].0 {
                return keys[keys.len() - 1].1;
            }
            let k = keys.partition_point(|(kt, _)| *kt <= t).max(1);
            let (t0, p0) = keys[k - 1];
            let (t1, p1) = keys[k];
            let s = (t - t0) / (t1 - t0);
            p0 + (p1 - p0) * s
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImplicitObstacle {
    pub shape: ObstacleShape,
    pub friction: f64,
    pub motion: MotionScript,
}

impl ImplicitObstacle {
    pub fn fixed(shape: ObstacleShape, friction: f64) -> Self {
        ImplicitObstacle {
            shape,
            friction,
            motion: MotionScript::default(),
        }
    }

    /// Raw field value and its analytic gradient at `p`, time `t`.
    pub fn raw_field(&self, p: Vec3, t: f64) -> (f64, Vec3) {
        let q = p - self.motion.offset_at(t);
        match &self.shape {
            ObstacleShape::Plane { point, normal } => {
                let n = normal.normalized(1e-300).expect("plane normal");
                ((q - *point).dot(n), n)
            }
            ObstacleShape::Sphere { center, radius } => {
                let d = q - *center;
                match d.normalized(1e-12) {
                    Some(n) => (d.norm() - radius, n),
                    None => (-radius, Vec3::new(0.0, 0.0, 1.0)),
                }
            }
            ObstacleShape::Cylinder { point, axis, radius } => {
                let a = axis.normalized(1e-300).expect("cylinder axis");
                let d = q - *point;
                let perp = d - a * d.dot(a);
                match perp.normalized(1e-12) {
                    Some(n) => (perp.norm() - radius, n),
                    None => (-radius, orthogonal_to(a)),
                }
            }
            ObstacleShape::NeedleField { c1, c2 } => {
                let raw = c1 * c2 * q.z - (c1 * q.x).sin() * (c1 * q.y).sin();
                let grad = Vec3::new(
                    -c1 * (c1 * q.x).cos() * (c1 * q.y).sin(),
                    -c1 * (c1 * q.x).sin() * (c1 * q.y).cos(),
                    c1 * c2,
                );
                (raw, grad)
            }
        }
    }

    /// First-order signed distance and unit outward gradient at `p`:
    /// the raw field rescaled by its gradient norm so tolerances and
    /// thickness offsets act in length units.
    pub fn signed_distance(&self, p: Vec3, t: f64) -> (f64, Vec3) {
        let (raw, grad) = self.raw_field(p, t);
        let norm = grad.norm();
        (raw / norm, grad / norm)
    }

    /// Velocity of the obstacle's material point currently at `p`.
    pub fn point_velocity(&self, p: Vec3, t: f64) -> Vec3 {
        let mut v = self.motion.translation_velocity(t);
        if let Some(rot) = &self.motion.rotation {
            if t >= rot.start && t <= rot.end {
                let center = self.reference_point() + self.motion.offset_at(t);
                let omega = rot.axis.normalized(1e-300).expect("rotation axis")
                    * rot.angular_velocity;
                v += omega.cross(p - center);
            }
        }
        v
    }

    fn reference_point(&self) -> Vec3 {
        match &self.shape {
            ObstacleShape::Plane { point, .. } => *point,
            ObstacleShape::Sphere { center, .. } => *center,
            ObstacleShape::Cylinder { point, .. } => *point,
            ObstacleShape::NeedleField { .. } => Vec3::ZERO,
        }
    }

    /// Central finite-difference check of the analytic raw-field gradient;
    /// returns the worst deviation over the probe points.
    pub fn gradient_check(&self, probes: &[Vec3], t: f64, h: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for &p in probes {
            let (_, g) = self.raw_field(p, t);
            for k in 0..3 {
                let mut dp = Vec3::ZERO;
                match k {
                    0 => dp.x = h,
                    1 => dp.y = h,
                    _ => dp.z = h,
                }
                let (vp, _) = self.raw_field(p + dp, t);
                let (vm, _) = self.raw_field(p - dp, t);
                let fd = (vp - vm) / (2.0 * h);
                let a = match k {
                    0 => g.x,
                    1 => g.y,
                    _ => g.z,
                };
                worst = worst.max((a - fd).abs());
            }
        }
        worst
    }
}

fn orthogonal_to(a: Vec3) -> Vec3 {
    let trial = if a.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    a.cross(trial).normalized(1e-300).unwrap()
}

/// One row per mesh node: H(p_i) with the unit gradient in that node's
/// columns.
pub fn eval_obstacle(
    obstacle: &ImplicitObstacle,
    node_count: usize,
    positions: &[f64],
    t: f64,
) -> ConstraintBlock {
    let mut values = Vec::with_capacity(node_count);
    let mut rows = Vec::with_capacity(node_count);
    for i in 0..node_count {
        let (h, g) = obstacle.signed_distance(node(positions, i), t);
        values.push(h);
        rows.push(SparseRow::from_nodes(&[(i, g)]));
    }
    ConstraintBlock {
        kind: ConstraintKind::Obstacle,
        values,
        rows,
    }
}

/// Surface velocity of a (possibly rotating) sphere obstacle at a point.
pub fn sphere_surface_velocity(obstacle: &ImplicitObstacle, point: Vec3, t: f64) -> Vec3 {
    obstacle.point_velocity(point, t)
}

/// Cusp points of the needle field inside the given x/y ranges: both sine
/// factors at +1 or both at −1, z = 1/(c1 c2).
pub fn needle_cusps(c1: f64, c2: f64, x_range: (f64, f64), y_range: (f64, f64)) -> Vec<Vec3> {
    let z = 1.0 / (c1 * c2);
    let period = 2.0 * PI / c1;
    let mut out = Vec::new();
    for sign in [1.0f64, -1.0] {
        let x0 = sign * PI / (2.0 * c1);
        let m_lo = ((x_range.0 - x0) / period).floor() as i64;
        let m_hi = ((x_range.1 - x0) / period).ceil() as i64;
        let n_lo = ((y_range.0 - x0) / period).floor() as i64;
        let n_hi = ((y_range.1 - x0) / period).ceil() as i64;
        for m in m_lo..=m_hi {
            let x = x0 + m as f64 * period;
            if x < x_range.0 || x > x_range.1 {
                continue;
            }
            for n in n_lo..=n_hi {
                let y = x0 + n as f64 * period;
                if y < y_range.0 || y > y_range.1 {
                    continue;
                }
                out.push(Vec3::new(x, y, z));
            }
        }
    }
    out.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    out
}

/// Cusp-vs-face contacts over the motion `phi_n` → `phi_j`: the cusp acts
/// as a fixed node in the same sweep machinery as self-collisions.
#[allow(clippy::too_many_arguments)]
pub fn cusp_face_constraints(
    cusps: &[Vec3],
    mesh: &ClothMesh,
    phi_n: &[f64],
    phi_j: &[f64],
    dt: f64,
    omega: f64,
    tau0: f64,
    birth_iteration: usize,
    mu: f64,
) -> Vec<ContactRecord> {
    let n = mesh.node_count();
    let mut vel = vec![0.0; 3 * n];
    let mut max_disp: f64 = 0.0;
    for i in 0..3 * n {
        vel[i] = (phi_j[i] - phi_n[i]) / dt;
    }
    for i in 0..n {
        max_disp = max_disp.max((node(phi_j, i) - node(phi_n, i)).norm());
    }
    let enlarge = omega * tau0 + 0.1 * max_disp + 0.5 * tau0;

    let mut records = Vec::new();
    for (fi, f) in mesh.tris.iter().enumerate() {
        let mut bb = Aabb::empty();
        for &i in f {
            bb.min = bb.min.min_comp(node(phi_n, i)).min_comp(node(phi_j, i));
            bb.max = bb.max.max_comp(node(phi_n, i)).max_comp(node(phi_j, i));
        }
        let bb = bb.grow(enlarge);
        for (ci, &q) in cusps.iter().enumerate() {
            if q.x < bb.min.x || q.x > bb.max.x || q.y < bb.min.y || q.y > bb.max.y
                || q.z < bb.min.z || q.z > bb.max.z
            {
                continue;
            }
            let x = [node(phi_n, f[0]), node(phi_n, f[1]), node(phi_n, f[2]), q];
            let v = [
                node(&vel, f[0]),
                node(&vel, f[1]),
                node(&vel, f[2]),
                Vec3::ZERO,
            ];
            if sweep_node_face(x, v, dt, omega * tau0).is_some() {
                let y = [node(phi_j, f[0]), node(phi_j, f[1]), node(phi_j, f[2])];
                let (u, vv, w) = crate::collision::point_triangle_closest(q, y[0], y[1], y[2]);
                let Some(nu) = (y[1] - y[0]).cross(y[2] - y[0]).normalized(1e-12) else {
                    continue;
                };
                let mut rec = ContactRecord {
                    key: RecordKey::CuspFace { cusp: ci, face: fi },
                    kind: PairKind::CuspFace,
                    nodes: vec![f[0], f[1], f[2]],
                    weights: vec![-u, -vv, -w],
                    normal: nu,
                    constant: q.dot(nu),
                    tau0,
                    birth_iteration,
                    mu,
                    counterpart_velocity: Vec3::ZERO,
                };
                orient(&mut rec, phi_n, phi_j);
                records.push(rec);
            }
        }
    }
    records.sort_by(|a, b| a.key.cmp(&b.key));
    records
}

/// A rigid stick swept through the scene, discretized into straight
/// segments; contact radius `tau0` equals the physical stick radius.
#[derive(Debug, Clone)]
pub struct StickObstacle {
    /// (time, endpoint a, endpoint b) samples, strictly increasing times.
    pub samples: Vec<(f64, Vec3, Vec3)>,
    pub radius: f64,
    pub segments: usize,
    pub friction: f64,
}

impl StickObstacle {
    pub fn new(samples: Vec<(f64, Vec3, Vec3)>, radius: f64, segments: usize, friction: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Config("stick radius must be positive".into()));
        }
        if samples.len() < 2 {
            return Err(Error::Config("stick trajectory needs at least 2 samples".into()));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Config("stick trajectory times must be strictly increasing".into()));
        }
        Ok(StickObstacle {
            samples,
            radius,
            segments: segments.max(1),
            friction,
        })
    }

    /// Load endpoint samples from a CSV of `t,x1,y1,z1,x2,y2,z2` lines.
    /// Rows with missing fields are linearly interpolated from their
    /// neighbors, matching how gaps in a rigid marker track are filled.
    pub fn from_csv(path: &Path, radius: f64, segments: usize, friction: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut raw: Vec<(f64, Option<(Vec3, Vec3)>)> = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
            if fields.len() != 7 {
                return Err(Error::Config(format!(
                    "{}: line {} must have 7 comma-separated fields",
                    path.display(),
                    ln + 1
                )));
            }
            let t: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Config(format!("{}: bad time on line {}", path.display(), ln + 1)))?;
            let vals: Vec<Option<f64>> = fields[1..].iter().map(|s| s.parse().ok()).collect();
            if vals.iter().all(Option::is_some) {
                let v: Vec<f64> = vals.into_iter().map(Option::unwrap).collect();
                raw.push((
                    t,
                    Some((Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))),
                ));
            } else {
                raw.push((t, None));
            }
        }
        // Fill gaps by linear interpolation between known neighbors.
        let known: Vec<usize> = raw
            .iter()
            .enumerate()
            .filter_map(|(i, (_, s))| s.map(|_| i))
            .collect();
        if known.len() < 2 {
            return Err(Error::Config(format!(
                "{}: needs at least two complete samples",
                path.display()
            )));
        }
        let mut samples = Vec::with_capacity(raw.len());
        for (i, (t, s)) in raw.iter().enumerate() {
            if let Some((a, b)) = s {
                samples.push((*t, *a, *b));
                continue;
            }
            let before = known.iter().rev().find(|&&k| k < i);
            let after = known.iter().find(|&&k| k > i);
            let (a, b) = match (before, after) {
                (Some(&lo), Some(&hi)) => {
                    let (t0, a0, b0) = (raw[lo].0, raw[lo].1.unwrap().0, raw[lo].1.unwrap().1);
                    let (t1, a1, b1) = (raw[hi].0, raw[hi].1.unwrap().0, raw[hi].1.unwrap().1);
                    let s = (*t - t0) / (t1 - t0);
                    (a0 + (a1 - a0) * s, b0 + (b1 - b0) * s)
                }
                (None, Some(&hi)) => (raw[hi].1.unwrap().0, raw[hi].1.unwrap().1),
                (Some(&lo), None) => (raw[lo].1.unwrap().0, raw[lo].1.unwrap().1),
                (None, None) => unreachable!(),
            };
            samples.push((*t, a, b));
        }
        Self::new(samples, radius, segments, friction)
    }

    pub fn endpoints_at(&self, t: f64) -> (Vec3, Vec3) {
        let n = self.samples.len();
        if t <= self.samples[0].0 {
            return (self.samples[0].1, self.samples[0].2);
        }
        if t >= self.samples[n - 1].0 {
            return (self.samples[n - 1].1, self.samples[n - 1].2);
        }
        let k = self.samples.partition_point(|s| s.0 <= t).max(1);
        let (t0, a0, b0) = self.samples[k - 1];
        let (t1, a1, b1) = self.samples[k];
        let s = (t - t0) / (t1 - t0);
        (a0 + (a1 - a0) * s, b0 + (b1 - b0) * s)
    }

    /// Endpoints of subdivision segment `k` at time `t`.
    pub fn segment_at(&self, k: usize, t: f64) -> (Vec3, Vec3) {
        let (a, b) = self.endpoints_at(t);
        let m = self.segments as f64;
        let lo = k as f64 / m;
        let hi = (k + 1) as f64 / m;
        (a + (b - a) * lo, a + (b - a) * hi)
    }
}

/// Stick-vs-cloth-edge contacts over [t_n, t_n + dt]: swept edge-edge
/// tests between every stick segment and every cloth edge; weights and
/// normals are frozen from `phi_j` and the stick placement at t_{n+1}.
#[allow(clippy::too_many_arguments)]
pub fn stick_edge_constraints(
    stick: &StickObstacle,
    stick_index: usize,
    mesh: &ClothMesh,
    phi_n: &[f64],
    phi_j: &[f64],
    t_n: f64,
    dt: f64,
    omega: f64,
    birth_iteration: usize,
) -> Vec<ContactRecord> {
    let n = mesh.node_count();
    let t_next = t_n + dt;
    let mut vel = vec![0.0; 3 * n];
    let mut max_disp: f64 = 0.0;
    for i in 0..3 * n {
        vel[i] = (phi_j[i] - phi_n[i]) / dt;
    }
    for i in 0..n {
        max_disp = max_disp.max((node(phi_j, i) - node(phi_n, i)).norm());
    }
    let tau0 = stick.radius;
    let enlarge = omega * tau0 + 0.1 * max_disp + 0.5 * tau0;

    let mut records = Vec::new();
    for k in 0..stick.segments {
        let (a0, b0) = stick.segment_at(k, t_n);
        let (a1, b1) = stick.segment_at(k, t_next);
        let va = (a1 - a0) / dt;
        let vb = (b1 - b0) / dt;
        let mut seg_box = Aabb::of_points(&[a0, b0, a1, b1]).grow(enlarge);
        let disp = (a1 - a0).norm().max((b1 - b0).norm());
        seg_box = seg_box.grow(0.1 * disp);
        for (ei, e) in mesh.edges.iter().enumerate() {
            let ebox = Aabb::of_points(&[
                node(phi_n, e[0]),
                node(phi_n, e[1]),
                node(phi_j, e[0]),
                node(phi_j, e[1]),
            ])
            .grow(enlarge);
            if !seg_box.overlaps(&ebox) {
                continue;
            }
            let x = [a0, b0, node(phi_n, e[0]), node(phi_n, e[1])];
            let v = [va, vb, node(&vel, e[0]), node(&vel, e[1])];
            if sweep_edge_edge(x, v, dt, omega * tau0).is_some() {
                let y = [a1, b1, node(phi_j, e[0]), node(phi_j, e[1])];
                let (alpha, beta) = segment_segment_closest(y[0], y[1], y[2], y[3]);
                let stick_point = y[0] + (y[1] - y[0]) * alpha;
                let mut nu = (y[1] - y[0]).cross(y[3] - y[2]).normalized(1e-12);
                if nu.is_none() {
                    let cloth_point = y[2] + (y[3] - y[2]) * beta;
                    nu = (stick_point - cloth_point).normalized(1e-12);
                }
                let Some(nu) = nu else { continue };
                let stick_velocity = va + (vb - va) * alpha;
                let mut rec = ContactRecord {
                    key: RecordKey::StickEdge {
                        stick: stick_index,
                        segment: k,
                        edge: ei,
                    },
                    kind: PairKind::StickEdge,
                    nodes: vec![e[0], e[1]],
                    weights: vec![-(1.0 - beta), -beta],
                    normal: nu,
                    constant: stick_point.dot(nu),
                    tau0,
                    birth_iteration,
                    mu: stick.friction,
                    counterpart_velocity: stick_velocity,
                };
                orient(&mut rec, phi_n, phi_j);
                records.push(rec);
            }
        }
    }
    records.sort_by(|a, b| a.key.cmp(&b.key));
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_and_sphere_values() {
        let plane = ImplicitObstacle::fixed(
            ObstacleShape::Plane {
                point: Vec3::ZERO,
                normal: Vec3::new(0.0, 0.0, 1.0),
            },
            0.0,
        );
        let (h, g) = plane.signed_distance(Vec3::new(0.0, 0.0, 0.3), 0.0);
        assert!((h - 0.3).abs() < 1e-15);
        assert!((g - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);

        let sphere = ImplicitObstacle::fixed(
            ObstacleShape::Sphere {
                center: Vec3::ZERO,
                radius: 1.0,
            },
            0.0,
        );
        let (h, g) = sphere.signed_distance(Vec3::new(2.0, 0.0, 0.0), 0.0);
        assert!((h - 1.0).abs() < 1e-15);
        assert!((g - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn needle_cusp_lies_on_surface() {
        let (c1, c2) = (20.0, 0.075);
        let field = ImplicitObstacle::fixed(ObstacleShape::NeedleField { c1, c2 }, 0.0);
        let cusps = needle_cusps(c1, c2, (-0.3, 0.3), (-0.3, 0.3));
        assert!(!cusps.is_empty());
        for q in &cusps {
            assert!((q.z - 1.0 / (c1 * c2)).abs() < 1e-12);
            let (h, _) = field.signed_distance(*q, 0.0);
            assert!(h.abs() < 1e-12, "cusp off the surface: {h}");
        }
    }

    #[test]
    fn gradient_checks() {
        let probes: Vec<Vec3> = vec![
            Vec3::new(0.3, -0.2, 0.8),
            Vec3::new(-1.0, 0.5, 0.2),
            Vec3::new(0.05, 0.12, 0.9),
        ];
        let obstacles = [
            ImplicitObstacle::fixed(
                ObstacleShape::Plane {
                    point: Vec3::ZERO,
                    normal: Vec3::new(0.1, 0.2, 1.0),
                },
                0.0,
            ),
            ImplicitObstacle::fixed(
                ObstacleShape::Sphere {
                    center: Vec3::new(0.0, 0.0, -0.5),
                    radius: 0.4,
                },
                0.0,
            ),
            ImplicitObstacle::fixed(
                ObstacleShape::Cylinder {
                    point: Vec3::new(0.0, 0.0, -0.3),
                    axis: Vec3::new(0.0, 1.0, 0.0),
                    radius: 0.2,
                },
                0.0,
            ),
        ];
        for o in &obstacles {
            assert!(o.gradient_check(&probes, 0.0, 1e-6) < 1e-6);
        }
        let field = ImplicitObstacle::fixed(ObstacleShape::NeedleField { c1: 20.0, c2: 0.075 }, 0.0);
        assert!(field.gradient_check(&probes, 0.0, 1e-6) < 1e-5);
    }

    #[test]
    fn rotating_sphere_surface_velocity() {
        let sphere = ImplicitObstacle {
            shape: ObstacleShape::Sphere {
                center: Vec3::new(0.0, 0.0, 0.35),
                radius: 0.35,
            },
            friction: 0.5,
            motion: MotionScript {
                translation: vec![],
                rotation: Some(RotationScript {
                    axis: Vec3::new(0.0, 0.0, 1.0),
                    start: 1.0,
                    end: 2.0,
                    angular_velocity: PI,
                }),
            },
        };
        // Static before the script window.
        assert_eq!(
            sphere_surface_velocity(&sphere, Vec3::new(0.35, 0.0, 0.35), 0.5),
            Vec3::ZERO
        );
        // Half rotation about z over 1 s: |v| = π r at the equator.
        let v = sphere_surface_velocity(&sphere, Vec3::new(0.35, 0.0, 0.35), 1.5);
        assert!((v - Vec3::new(0.0, PI * 0.35, 0.0)).norm() < 1e-12);
        // Axis point.
        let v = sphere_surface_velocity(&sphere, Vec3::new(0.0, 0.0, 0.7), 1.5);
        assert!(v.norm() < 1e-15);
    }

    #[test]
    fn obstacle_rows_one_per_node() {
        let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
        let plane = ImplicitObstacle::fixed(
            ObstacleShape::Plane {
                point: Vec3::ZERO,
                normal: Vec3::new(0.0, 0.0, 1.0),
            },
            0.3,
        );
        let mut lifted = mesh.rest_flat();
        for i in 0..mesh.node_count() {
            lifted[3 * i + 2] = 0.1 + 0.01 * i as f64;
        }
        let block = eval_obstacle(&plane, mesh.node_count(), &lifted, 0.0);
        assert_eq!(block.len(), 9);
        for (i, v) in block.values.iter().enumerate() {
            assert!((v - (0.1 + 0.01 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn cusp_descending_face_detected_at_centroid() {
        // One face descending vertically through a cusp placed under its
        // centroid; pure vertical motion makes the root linear.
        let mesh = ClothMesh::grid(2, 2, 1.0, 1.0).unwrap();
        let cusp = {
            let f = mesh.tris[0];
            let flat = mesh.rest_flat();
            (node(&flat, f[0]) + node(&flat, f[1]) + node(&flat, f[2])) / 3.0
        };
        let mut from = mesh.rest_flat();
        let mut to = mesh.rest_flat();
        for i in 0..mesh.node_count() {
            from[3 * i + 2] = 0.05;
            to[3 * i + 2] = -0.05;
        }
        let recs = cusp_face_constraints(&[cusp], &mesh, &from, &to, 0.01, 0.0, 0.002, 0, 0.0);
        let hit = recs.iter().find(|r| matches!(r.key, RecordKey::CuspFace { face: 0, .. }));
        let hit = hit.expect("descending face must hit the cusp");
        for w in &hit.weights {
            assert!((w.abs() - 1.0 / 3.0).abs() < 1e-9);
        }
        assert!(hit.raw_value(&from) >= -1e-12);

        // A face moving parallel above the cusp never crosses.
        let mut up_from = mesh.rest_flat();
        let mut up_to = mesh.rest_flat();
        for i in 0..mesh.node_count() {
            up_from[3 * i + 2] = 0.05;
            up_to[3 * i + 2] = 0.06;
        }
        let recs = cusp_face_constraints(&[cusp], &mesh, &up_from, &up_to, 0.01, 0.0, 0.002, 0, 0.0);
        assert!(recs.is_empty());
    }

    #[test]
    fn stick_sweep_through_edge_midpoint() {
        // Perpendicular stick segment sweeping through a cloth edge.
        let mesh = ClothMesh::grid(2, 2, 1.0, 1.0).unwrap();
        let flat = mesh.rest_flat();
        // Pick the bottom edge (0)-(1): from (0,0,0) to (1,0,0).
        let ei = mesh
            .edges
            .iter()
            .position(|e| *e == [0, 1])
            .expect("bottom edge");
        let stick = StickObstacle::new(
            vec![
                (0.0, Vec3::new(0.5, -0.5, 0.2), Vec3::new(0.5, 0.5, 0.2)),
                (0.01, Vec3::new(0.5, -0.5, -0.2), Vec3::new(0.5, 0.5, -0.2)),
            ],
            0.0075,
            1,
            0.0,
        )
        .unwrap();
        let recs = stick_edge_constraints(&stick, 0, &mesh, &flat, &flat, 0.0, 0.01, 0.0, 0);
        let rec = recs
            .iter()
            .find(|r| matches!(r.key, RecordKey::StickEdge { edge, .. } if edge == ei))
            .expect("stick must hit the bottom edge");
        assert!((rec.weights[0].abs() - 0.5).abs() < 1e-9);
        assert!((rec.weights[1].abs() - 0.5).abs() < 1e-9);
        assert!(rec.raw_value(&flat) >= -1e-12);

        // Far-away stick produces nothing.
        let far = StickObstacle::new(
            vec![
                (0.0, Vec3::new(5.0, -0.5, 1.0), Vec3::new(5.0, 0.5, 1.0)),
                (0.01, Vec3::new(5.0, -0.5, 0.9), Vec3::new(5.0, 0.5, 0.9)),
            ],
            0.0075,
            4,
            0.0,
        )
        .unwrap();
        assert!(stick_edge_constraints(&far, 0, &mesh, &flat, &flat, 0.0, 0.01, 0.0, 0).is_empty());
    }

    #[test]
    fn grazing_pass_outside_radius_vs_proximity() {
        let mesh = ClothMesh::grid(2, 2, 1.0, 1.0).unwrap();
        let flat = mesh.rest_flat();
        let radius = 0.01;
        // Pass parallel to the cloth plane at clearance 5 radii: no record.
        let graze = StickObstacle::new(
            vec![
                (0.0, Vec3::new(0.5, -0.5, 5.0 * radius), Vec3::new(0.5, 0.5, 5.0 * radius)),
                (0.01, Vec3::new(0.5, -0.5, 4.9 * radius), Vec3::new(0.5, 0.5, 4.9 * radius)),
            ],
            radius,
            1,
            0.0,
        )
        .unwrap();
        assert!(
            stick_edge_constraints(&graze, 0, &mesh, &flat, &flat, 0.0, 0.01, 0.45, 0).is_empty()
        );
        // Approach into the proximity band (below ~2 ω τ0): record appears
        // before any true crossing.
        let close = StickObstacle::new(
            vec![
                (0.0, Vec3::new(0.5, -0.5, 1.2 * radius), Vec3::new(0.5, 0.5, 1.2 * radius)),
                (0.01, Vec3::new(0.5, -0.5, 0.4 * radius), Vec3::new(0.5, 0.5, 0.4 * radius)),
            ],
            radius,
            1,
            0.0,
        )
        .unwrap();
        let recs = stick_edge_constraints(&close, 0, &mesh, &flat, &flat, 0.0, 0.01, 0.45, 0);
        assert!(!recs.is_empty(), "proximity approach must be caught");
    }

    #[test]
    fn stick_csv_interpolates_missing_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stick.csv");
        std::fs::write(
            &path,
            "0.0,0,0,1, 1,0,1\n0.5,,,,,,\n1.0,0,0,0, 1,0,0\n",
        )
        .unwrap();
        let stick = StickObstacle::from_csv(&path, 0.0075, 8, 0.0).unwrap();
        let (a, b) = stick.endpoints_at(0.5);
        assert!((a - Vec3::new(0.0, 0.0, 0.5)).norm() < 1e-12);
        assert!((b - Vec3::new(1.0, 0.0, 0.5)).norm() < 1e-12);
    }
}
