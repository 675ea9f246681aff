//! Self-collision detection and contact records.
//!
//! Narrow phase follows the classic four-point coplanarity test: the time
//! at which two moving edges (or a node and a face) become coplanar is a
//! root of a cubic determinant; an inclusion test in the common plane then
//! decides whether the elements actually cross. Cloth thickness enters
//! through the proximity parameter ω: detection runs on positions
//! virtually displaced by ±ωτ0 along the pair normal so contacts are
//! caught while the real separation is still about 2ωτ0, and the response
//! constraint keeps the pair at distance τ0.

use std::collections::BTreeSet;

use crate::math::{node, Aabb, Vec3};
use crate::mesh::ClothMesh;
use crate::rows::SparseRow;

/// Coplanarity tolerance for inclusion tests after root polishing, in
/// determinant units (m³ scaled).
pub const COPLANARITY_TOL: f64 = 1e-9;

/// Inclusive boundary slack for barycentric / segment parameters.
const PARAM_TOL: f64 = 1e-9;

/// Pair classification of one detected contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PairKind {
    EdgeEdge,
    NodeFace,
    CuspFace,
    StickEdge,
}

/// Stable identity of a contact across solver iterations and steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RecordKey {
    EdgeEdge { e1: usize, e2: usize },
    NodeFace { node: usize, face: usize },
    CuspFace { cusp: usize, face: usize },
    StickEdge { stick: usize, segment: usize, edge: usize },
}

/// One detected collision, frozen into a linear constraint
/// value(φ) = Σ_i w_i ⟨x_i, ν⟩ + c − τ0 ≥ 0.
#[derive(Debug, Clone)]
pub struct ContactRecord {
    pub key: RecordKey,
    pub kind: PairKind,
    /// Cloth nodes carrying gradient ν scaled by the matching weight.
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
    /// Frozen unit normal.
    pub normal: Vec3,
    /// Constant term: ⟨cusp or stick point, ν⟩ for one-sided pairs, else 0.
    pub constant: f64,
    pub tau0: f64,
    pub birth_iteration: usize,
    pub mu: f64,
    /// Velocity of the non-cloth side at the contact point (stick hits).
    pub counterpart_velocity: Vec3,
}

impl ContactRecord {
    /// Raw geometric value ⟨·,ν⟩ + c at the given positions (before the
    /// thickness offset).
    pub fn raw_value(&self, positions: &[f64]) -> f64 {
        let mut v = self.constant;
        for (&n, &w) in self.nodes.iter().zip(&self.weights) {
            v += w * node(positions, n).dot(self.normal);
        }
        v
    }

    /// Constraint value for the solver: raw − τ0.
    pub fn value(&self, positions: &[f64]) -> f64 {
        self.raw_value(positions) - self.tau0
    }

    pub fn gradient_row(&self) -> SparseRow {
        let entries: Vec<(usize, Vec3)> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&n, &w)| (n, self.normal * w))
            .collect();
        SparseRow::from_nodes(&entries)
    }

    /// Effective inverse mass along the gradient direction: Σ w_i² / m_i.
    pub fn inv_mass_effective(&self, node_mass: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&n, &w)| w * w / node_mass[n])
            .sum()
    }

    /// Contact-point displacement for cloth nodes between two states.
    pub fn point_displacement(&self, from: &[f64], to: &[f64]) -> Vec3 {
        let mut d = Vec3::ZERO;
        for (&n, &w) in self.nodes.iter().zip(&self.weights) {
            d += (node(to, n) - node(from, n)) * w;
        }
        d
    }
}

/// A broad-phase candidate: two elements whose swept, enlarged boxes overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CandidatePair {
    /// Indices into the mesh edge list.
    EdgeEdge(usize, usize),
    /// Node index, face index.
    NodeFace(usize, usize),
}

/// Real roots of det(x̃1 + t ṽ1, x̃2 + t ṽ2, x̃3 + t ṽ3) = 0 inside
/// [0, dt], ascending. Falls back to the linear approximation −a0/a1 when
/// the higher coefficients are negligible; an identically zero determinant
/// yields t = 0.
pub fn coplanarity_times(x: [Vec3; 4], v: [Vec3; 4], dt: f64) -> Vec<f64> {
    let xt = [x[0] - x[3], x[1] - x[3], x[2] - x[3]];
    let vt = [v[0] - v[3], v[1] - v[3], v[2] - v[3]];

    let a3 = Vec3::det3(vt[0], vt[1], vt[2]);
    let a2 = Vec3::det3(xt[0], vt[1], vt[2])
        + Vec3::det3(vt[0], xt[1], vt[2])
        + Vec3::det3(vt[0], vt[1], xt[2]);
    let a1 = Vec3::det3(xt[0], xt[1], vt[2])
        + Vec3::det3(xt[0], vt[1], xt[2])
        + Vec3::det3(vt[0], xt[1], xt[2]);
    let a0 = Vec3::det3(xt[0], xt[1], xt[2]);

    // Scale for degeneracy decisions: typical determinant magnitude.
    let scale = xt
        .iter()
        .map(|w| w.norm())
        .chain(vt.iter().map(|w| w.norm() * dt))
        .fold(0.0f64, f64::max)
        .powi(3)
        .max(f64::MIN_POSITIVE);
    let poly_scale = a0.abs() + a1.abs() * dt + a2.abs() * dt * dt + a3.abs() * dt * dt * dt;

    if poly_scale <= 1e-30 * scale.max(1.0) {
        return vec![0.0];
    }

    let mut roots: Vec<f64> = Vec::new();
    if a3.abs() * dt * dt * dt + a2.abs() * dt * dt < 1e-12 * a1.abs() * dt {
        // Nearly linear in t.
        let r = -a0 / a1;
        roots.push(r);
    } else if a3.abs() * dt * dt * dt < 1e-14 * poly_scale {
        // Quadratic.
        roots.extend(quadratic_roots(a2, a1, a0));
    } else {
        roots.extend(cubic_roots(a3, a2, a1, a0));
    }

    let eval = |t: f64| ((a3 * t + a2) * t + a1) * t + a0;
    let deriv = |t: f64| (3.0 * a3 * t + 2.0 * a2) * t + a1;
    let t_tol = 1e-9 * dt.max(1e-12);
    let mut out: Vec<f64> = Vec::new();
    for r in roots {
        let mut t = r;
        // One Newton polish pass keeps the determinant residual tight.
        for _ in 0..2 {
            let d = deriv(t);
            if d.abs() > 1e-300 {
                t -= eval(t) / d;
            }
        }
        if t >= -t_tol && t <= dt + t_tol {
            out.push(t.clamp(0.0, dt));
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() <= t_tol);
    out
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        if b == 0.0 {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    // Numerically stable pairing of the two roots.
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// All real roots of a3 t³ + a2 t² + a1 t + a0 (Cardano / trigonometric).
fn cubic_roots(a3: f64, a2: f64, a1: f64, a0: f64) -> Vec<f64> {
    let b = a2 / a3;
    let c = a1 / a3;
    let d = a0 / a3;
    // Depressed form t = s − b/3: s³ + p s + q = 0.
    let p = c - b * b / 3.0;
    let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = (q / 2.0) * (q / 2.0) + (p / 3.0) * (p / 3.0) * (p / 3.0);
    let mut roots = Vec::new();
    if disc > 0.0 {
        let sq = disc.sqrt();
        let u = cbrt(-q / 2.0 + sq);
        let v = cbrt(-q / 2.0 - sq);
        roots.push(u + v + shift);
    } else if disc == 0.0 {
        let u = cbrt(-q / 2.0);
        roots.push(2.0 * u + shift);
        roots.push(-u + shift);
    } else {
        // Three real roots.
        let r = (-p / 3.0).powi(3).sqrt();
        let phi = (-q / (2.0 * r)).clamp(-1.0, 1.0).acos();
        let m = 2.0 * (-p / 3.0).sqrt();
        for k in 0..3 {
            roots.push(m * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift);
        }
    }
    roots
}

fn cbrt(x: f64) -> f64 {
    x.signum() * x.abs().powf(1.0 / 3.0)
}

/// Intersection parameters of two coplanar segments (y1,y2) and (y3,y4):
/// returns (α, β) with both in [0,1] when the segments cross. Parallel
/// overlapping segments resolve to the midpoint of their overlap.
pub fn edge_edge_test(y1: Vec3, y2: Vec3, y3: Vec3, y4: Vec3) -> Option<(f64, f64)> {
    let d1 = y2 - y1;
    let d2 = y4 - y3;
    let r = y3 - y1;
    let n = d1.cross(d2);
    let nn = n.norm_sq();
    let scale = d1.norm_sq().max(d2.norm_sq()).max(f64::MIN_POSITIVE);
    if nn > 1e-14 * scale * scale {
        let alpha = r.cross(d2).dot(n) / nn;
        let beta = r.cross(d1).dot(n) / nn;
        if (-PARAM_TOL..=1.0 + PARAM_TOL).contains(&alpha)
            && (-PARAM_TOL..=1.0 + PARAM_TOL).contains(&beta)
        {
            return Some((alpha.clamp(0.0, 1.0), beta.clamp(0.0, 1.0)));
        }
        return None;
    }
    // Parallel segments: collinear overlap resolves to its midpoint.
    let len1_sq = d1.norm_sq();
    if len1_sq <= f64::MIN_POSITIVE {
        return None;
    }
    let off = r - d1 * (r.dot(d1) / len1_sq);
    if off.norm_sq() > 1e-12 * len1_sq {
        return None; // parallel but not collinear
    }
    let t3 = (y3 - y1).dot(d1) / len1_sq;
    let t4 = (y4 - y1).dot(d1) / len1_sq;
    let (lo_t, hi_t) = (t3.min(t4), t3.max(t4));
    let lo = lo_t.max(0.0);
    let hi = hi_t.min(1.0);
    if lo > hi + PARAM_TOL {
        return None;
    }
    let alpha = 0.5 * (lo + hi);
    let denom = t4 - t3;
    let beta = if denom.abs() > 1e-30 {
        ((alpha - t3) / denom).clamp(0.0, 1.0)
    } else {
        0.5
    };
    Some((alpha.clamp(0.0, 1.0), beta))
}

/// Barycentric coordinates (u, v, w) of a coplanar point y4 relative to
/// triangle (y1, y2, y3); `Some` only if all lie in [0,1]. Degenerate
/// triangles yield `None`.
pub fn node_face_test(y1: Vec3, y2: Vec3, y3: Vec3, y4: Vec3) -> Option<(f64, f64, f64)> {
    let e1 = y2 - y1;
    let e2 = y3 - y1;
    let d = y4 - y1;
    let n = e1.cross(e2);
    let nn = n.norm_sq();
    if nn <= 1e-16 * e1.norm_sq().max(e2.norm_sq()).powi(2).max(f64::MIN_POSITIVE) {
        return None;
    }
    let v = d.cross(e2).dot(n) / nn;
    let w = e1.cross(d).dot(n) / nn;
    let u = 1.0 - v - w;
    if u >= -PARAM_TOL && v >= -PARAM_TOL && w >= -PARAM_TOL && u <= 1.0 + PARAM_TOL {
        Some((u.clamp(0.0, 1.0), v.clamp(0.0, 1.0), w.clamp(0.0, 1.0)))
    } else {
        None
    }
}

/// Closest-point parameters (s, t) between segments p1 + s(q1−p1) and
/// p2 + t(q2−p2), both clamped to [0, 1].
pub fn segment_segment_closest(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> (f64, f64) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_sq();
    let e = d2.norm_sq();
    let f = d2.dot(r);
    if a <= 1e-30 && e <= 1e-30 {
        return (0.0, 0.0);
    }
    if a <= 1e-30 {
        return (0.0, (f / e).clamp(0.0, 1.0));
    }
    let c = d1.dot(r);
    if e <= 1e-30 {
        return ((-c / a).clamp(0.0, 1.0), 0.0);
    }
    let b = d1.dot(d2);
    let denom = a * e - b * b;
    let mut s = if denom.abs() > 1e-14 * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.5 // parallel: a stable midpoint convention
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s, t)
}

/// Closest point of a triangle to `p`, as clamped barycentric coordinates.
pub fn point_triangle_closest(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> (f64, f64, f64) {
    // Ericson, Real-Time Collision Detection §5.1.5.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (1.0, 0.0, 0.0);
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (0.0, 1.0, 0.0);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (1.0 - v, v, 0.0);
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (0.0, 0.0, 1.0);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (1.0 - w, 0.0, w);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (0.0, 1.0 - w, w);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (1.0 - v - w, v, w)
}

/// Distance between two segments.
pub fn segment_segment_distance(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    let (s, t) = segment_segment_closest(p1, q1, p2, q2);
    ((p1 + (q1 - p1) * s) - (p2 + (q2 - p2) * t)).norm()
}

/// Distance from a point to a triangle.
pub fn point_triangle_distance(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let (u, v, w) = point_triangle_closest(p, a, b, c);
    (a * u + b * v + c * w - p).norm()
}

/// Swept axis-aligned boxes of all mesh elements between two states,
/// hashed on a uniform grid; reports element pairs whose enlarged boxes
/// overlap, excluding pairs that share a node. The enlargement must cover
/// the proximity offset plus a safety margin.
pub fn broad_phase(
    mesh: &ClothMesh,
    from: &[f64],
    to: &[f64],
    enlarge: f64,
) -> Vec<CandidatePair> {
    #[derive(Clone, Copy)]
    enum Elem {
        Edge(usize),
        Face(usize),
        Node(usize),
    }

    let sweep_box = |ids: &[usize]| {
        let mut b = Aabb::empty();
        for &i in ids {
            b.min = b.min.min_comp(node(from, i)).min_comp(node(to, i));
            b.max = b.max.max_comp(node(from, i)).max_comp(node(to, i));
        }
        b.grow(enlarge)
    };

    let mut elems: Vec<(Elem, Aabb)> = Vec::new();
    for (ei, e) in mesh.edges.iter().enumerate() {
        elems.push((Elem::Edge(ei), sweep_box(e)));
    }
    for (fi, f) in mesh.tris.iter().enumerate() {
        elems.push((Elem::Face(fi), sweep_box(f)));
    }
    for ni in 0..mesh.node_count() {
        elems.push((Elem::Node(ni), sweep_box(&[ni])));
    }

    // Grid cell size: mean box extent keeps cell occupancy low.
    let mut mean_ext = 0.0;
    for (_, b) in &elems {
        mean_ext += (b.max - b.min).norm();
    }
    let cell = (mean_ext / elems.len().max(1) as f64).max(1e-6);

    use std::collections::HashMap;
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let key = |v: f64| (v / cell).floor() as i64;
    for (idx, (_, b)) in elems.iter().enumerate() {
        for ix in key(b.min.x)..=key(b.max.x) {
            for iy in key(b.min.y)..=key(b.max.y) {
                for iz in key(b.min.z)..=key(b.max.z) {
                    grid.entry((ix, iy, iz)).or_default().push(idx);
                }
            }
        }
    }

    let share_node = |a: &[usize], b: &[usize]| a.iter().any(|i| b.contains(i));
    let mut out: BTreeSet<CandidatePair> = BTreeSet::new();
    for bucket in grid.values() {
        for (k, &i) in bucket.iter().enumerate() {
            for &j in &bucket[k + 1..] {
                let (a, abox) = &elems[i.min(j)];
                let (b, bbox) = &elems[i.max(j)];
                if !abox.overlaps(bbox) {
                    continue;
                }
                match (*a, *b) {
                    (Elem::Edge(e1), Elem::Edge(e2)) => {
                        if !share_node(&mesh.edges[e1], &mesh.edges[e2]) {
                            out.insert(CandidatePair::EdgeEdge(e1.min(e2), e1.max(e2)));
                        }
                    }
                    (Elem::Face(f), Elem::Node(n)) | (Elem::Node(n), Elem::Face(f)) => {
                        if !mesh.tris[f].contains(&n) {
                            out.insert(CandidatePair::NodeFace(n, f));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Outcome of narrow-phase CCD on one candidate four-point sweep with
/// proximity offsets already applied.
pub struct SweepHit {
    pub alpha: f64,
    pub beta: f64,
    pub time: f64,
}

/// Edge-edge sweep with offsets: endpoints (x1,x2) vs (x3,x4) moving
/// linearly with velocities v over [0, dt]; positions are displaced by
/// ±offset along `nu` so the pair approaches.
pub fn sweep_edge_edge(
    x: [Vec3; 4],
    v: [Vec3; 4],
    dt: f64,
    offset: f64,
) -> Option<SweepHit> {
    let mut xs = x;
    if offset != 0.0 {
        let nu = (x[1] - x[0]).cross(x[3] - x[2]).normalized(1e-12);
        if let Some(nu) = nu {
            let mid1 = (x[0] + x[1]) * 0.5;
            let mid2 = (x[2] + x[3]) * 0.5;
            let s = if (mid2 - mid1).dot(nu) >= 0.0 { 1.0 } else { -1.0 };
            for p in xs.iter_mut().take(2) {
                *p += nu * (s * offset);
            }
            for p in xs.iter_mut().skip(2) {
                *p -= nu * (s * offset);
            }
        }
    }
    for t in coplanarity_times(xs, v, dt) {
        let y: Vec<Vec3> = (0..4).map(|i| xs[i] + v[i] * t).collect();
        if let Some((alpha, beta)) = edge_edge_test(y[0], y[1], y[2], y[3]) {
            return Some(SweepHit { alpha, beta, time: t });
        }
    }
    None
}

/// Node-face sweep with offsets: face (x1,x2,x3) vs node x4.
pub fn sweep_node_face(
    x: [Vec3; 4],
    v: [Vec3; 4],
    dt: f64,
    offset: f64,
) -> Option<SweepHit> {
    let mut xs = x;
    if offset != 0.0 {
        let nu = (x[1] - x[0]).cross(x[2] - x[0]).normalized(1e-12);
        if let Some(nu) = nu {
            let s = if (x[3] - x[0]).dot(nu) >= 0.0 { 1.0 } else { -1.0 };
            for p in xs.iter_mut().take(3) {
                *p += nu * (s * offset);
            }
            xs[3] -= nu * (s * offset);
        }
    }
    for t in coplanarity_times(xs, v, dt) {
        let y: Vec<Vec3> = (0..4).map(|i| xs[i] + v[i] * t).collect();
        if let Some((u, vv, w)) = node_face_test(y[0], y[1], y[2], y[3]) {
            // Encode barycentrics into (alpha, beta): alpha = v, beta = w.
            let _ = u;
            return Some(SweepHit { alpha: vv, beta: w, time: t });
        }
    }
    None
}

/// Detect all self-collisions of the cloth while moving from `phi_n` to
/// `phi_j` over `dt`, with proximity parameter `omega` and thickness
/// `tau0`. Records freeze weights and normals from `phi_j` and orient the
/// normal so the raw value at `phi_n` is nonnegative.
pub fn detect_collisions(
    mesh: &ClothMesh,
    phi_n: &[f64],
    phi_j: &[f64],
    dt: f64,
    omega: f64,
    tau0: f64,
    birth_iteration: usize,
    cloth_mu: f64,
) -> Vec<ContactRecord> {
    assert!((0.0..0.5).contains(&omega) || omega == 0.0);
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
    let candidates = broad_phase(mesh, phi_n, phi_j, enlarge);

    let pos = |i: usize| node(phi_n, i);
    let velo = |i: usize| node(&vel, i);
    let mut records = Vec::new();

    for cand in candidates {
        match cand {
            CandidatePair::EdgeEdge(e1, e2) => {
                let [a1, a2] = mesh.edges[e1];
                let [b1, b2] = mesh.edges[e2];
                let x = [pos(a1), pos(a2), pos(b1), pos(b2)];
                let v = [velo(a1), velo(a2), velo(b1), velo(b2)];
                if sweep_edge_edge(x, v, dt, omega * tau0).is_some() {
                    let y = [
                        node(phi_j, a1),
                        node(phi_j, a2),
                        node(phi_j, b1),
                        node(phi_j, b2),
                    ];
                    let (alpha, beta) = segment_segment_closest(y[0], y[1], y[2], y[3]);
                    let mut nu = (y[1] - y[0]).cross(y[3] - y[2]).normalized(1e-12);
                    if nu.is_none() {
                        // Parallel at the end state: use the connecting direction.
                        let pa = y[0] + (y[1] - y[0]) * alpha;
                        let pb = y[2] + (y[3] - y[2]) * beta;
                        nu = (pa - pb).normalized(1e-12);
                    }
                    let Some(nu) = nu else { continue };
                    let mut rec = ContactRecord {
                        key: RecordKey::EdgeEdge { e1, e2 },
                        kind: PairKind::EdgeEdge,
                        nodes: vec![a1, a2, b1, b2],
                        weights: vec![1.0 - alpha, alpha, -(1.0 - beta), -beta],
                        normal: nu,
                        constant: 0.0,
                        tau0,
                        birth_iteration,
                        mu: cloth_mu,
                        counterpart_velocity: Vec3::ZERO,
                    };
                    orient(&mut rec, phi_n, phi_j);
                    records.push(rec);
                }
            }
            CandidatePair::NodeFace(ni, fi) => {
                let [f1, f2, f3] = mesh.tris[fi];
                let x = [pos(f1), pos(f2), pos(f3), pos(ni)];
                let v = [velo(f1), velo(f2), velo(f3), velo(ni)];
                if sweep_node_face(x, v, dt, omega * tau0).is_some() {
                    let y = [
                        node(phi_j, f1),
                        node(phi_j, f2),
                        node(phi_j, f3),
                        node(phi_j, ni),
                    ];
                    let (u, vv, w) = point_triangle_closest(y[3], y[0], y[1], y[2]);
                    let Some(nu) = (y[1] - y[0]).cross(y[2] - y[0]).normalized(1e-12) else {
                        continue;
                    };
                    let mut rec = ContactRecord {
                        key: RecordKey::NodeFace { node: ni, face: fi },
                        kind: PairKind::NodeFace,
                        nodes: vec![f1, f2, f3, ni],
                        weights: vec![-u, -vv, -w, 1.0],
                        normal: nu,
                        constant: 0.0,
                        tau0,
                        birth_iteration,
                        mu: cloth_mu,
                        counterpart_velocity: Vec3::ZERO,
                    };
                    orient(&mut rec, phi_n, phi_j);
                    records.push(rec);
                }
            }
        }
    }
    records.sort_by(|a, b| a.key.cmp(&b.key));
    records
}

/// Flip the record normal so the raw value at the step start is
/// nonnegative; near-zero start values orient along the approach.
pub fn orient(rec: &mut ContactRecord, phi_n: &[f64], phi_j: &[f64]) {
    let start = rec.raw_value(phi_n);
    let flip = if start.abs() > 1e-12 {
        start < 0.0
    } else {
        rec.raw_value(phi_j) > rec.raw_value(phi_n)
    };
    if flip {
        rec.normal = -rec.normal;
        rec.constant = -rec.constant;
    }
}
