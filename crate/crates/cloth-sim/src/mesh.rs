//! Cloth mesh representation: rectangular grids and loaded templates,
//! lumped mass matrix, rest metric, state snapshots and frame export.
//!
//! The rest metric of every quad is the first fundamental form of the
//! rest configuration evaluated with a unit-cell bilinear parametrization,
//! so a quad with edge length `a` has `E0 = a^2` and the residuals used by
//! the inextensibility constraints carry units of m².

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{node, Vec3};

/// Magic bytes identifying a binary frame dump.
pub const FRAME_MAGIC: [u8; 4] = *b"CSF1";

/// Rest metric coefficients of one quad (first fundamental form).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestMetric {
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

impl RestMetric {
    /// The 2x2 form must be positive definite for a usable rest state.
    pub fn is_positive_definite(&self) -> bool {
        self.e > 0.0 && self.e * self.g - self.f * self.f > 0.0
    }
}

/// A quadrilateral cloth mesh with its rest configuration.
///
/// Quads store corner indices ordered (p00, p10, p11, p01); each quad is
/// split into two triangles along the (p00, p11) diagonal so collision
/// queries always see the same deterministic triangulation.
#[derive(Debug, Clone)]
pub struct ClothMesh {
    /// Grid dimensions when built as a regular grid; `None` for loaded templates.
    pub grid_dims: Option<(usize, usize)>,
    pub rest_positions: Vec<Vec3>,
    pub quads: Vec<[usize; 4]>,
    pub tris: Vec<[usize; 3]>,
    /// Unique undirected edges, each stored with the smaller index first.
    pub edges: Vec<[usize; 2]>,
    pub rest_metric: Vec<RestMetric>,
}

impl ClothMesh {
    /// Build a regular `nx` x `ny` grid spanning `width` x `height` meters
    /// in the local x-y plane (z = 0), corner at the origin.
    pub fn grid(nx: usize, ny: usize, width: f64, height: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 nodes per side, got {nx} x {ny}"
            )));
        }
        if width <= 0.0 || height <= 0.0 {
            return Err(Error::Config(format!(
                "grid dimensions must be positive, got {width} x {height}"
            )));
        }
        let dx = width / (nx - 1) as f64;
        let dy = height / (ny - 1) as f64;
        let mut rest = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                rest.push(Vec3::new(i as f64 * dx, j as f64 * dy, 0.0));
            }
        }
        let at = |i: usize, j: usize| j * nx + i;
        let mut quads = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                quads.push([at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]);
            }
        }
        Self::from_parts(rest, quads, Some((nx, ny)))
    }

    /// Assemble a mesh from explicit rest positions and quads. Used by the
    /// grid constructor and by template loading; derives triangles, edges
    /// and the rest metric.
    pub fn from_parts(
        rest_positions: Vec<Vec3>,
        quads: Vec<[usize; 4]>,
        grid_dims: Option<(usize, usize)>,
    ) -> Result<Self> {
        let n = rest_positions.len();
        for (qi, q) in quads.iter().enumerate() {
            let mut sorted = *q;
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) || q.iter().any(|&i| i >= n) {
                return Err(Error::Config(format!("quad {qi} has invalid corner indices {q:?}")));
            }
        }
        let mut tris = Vec::with_capacity(quads.len() * 2);
        let mut edges = Vec::new();
        for q in &quads {
            tris.push([q[0], q[1], q[2]]);
            tris.push([q[0], q[2], q[3]]);
            for &[a, b] in &[[q[0], q[1]], [q[1], q[2]], [q[2], q[3]], [q[3], q[0]], [q[0], q[2]]] {
                edges.push([a.min(b), a.max(b)]);
            }
        }
        edges.sort_unstable();
        edges.dedup();

        let mut mesh = ClothMesh {
            grid_dims,
            rest_positions,
            quads,
            tris,
            edges,
            rest_metric: Vec::new(),
        };
        let flat = mesh.rest_flat();
        mesh.rest_metric = mesh.quads.iter().map(|q| quad_metric(&flat, q)).collect();
        for (qi, m) in mesh.rest_metric.iter().enumerate() {
            if !m.is_positive_definite() {
                return Err(Error::Config(format!(
                    "rest metric of quad {qi} is not positive definite ({m:?})"
                )));
            }
        }
        Ok(mesh)
    }

    pub fn node_count(&self) -> usize {
        self.rest_positions.len()
    }

    pub fn dof(&self) -> usize {
        3 * self.rest_positions.len()
    }

    /// Rest positions flattened into a 3N vector.
    pub fn rest_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dof());
        for p in &self.rest_positions {
            v.extend_from_slice(&[p.x, p.y, p.z]);
        }
        v
    }

    /// Total rest area (sum of triangle areas).
    pub fn rest_area(&self) -> f64 {
        let flat = self.rest_flat();
        self.tris.iter().map(|t| tri_area(&flat, t)).sum()
    }

    /// Rest area of one quad.
    pub fn quad_rest_area(&self, q: &[usize; 4]) -> f64 {
        let flat = self.rest_flat();
        tri_area(&flat, &[q[0], q[1], q[2]]) + tri_area(&flat, &[q[0], q[2], q[3]])
    }

    /// Node index helper for grid meshes.
    pub fn grid_node(&self, i: usize, j: usize) -> usize {
        let (nx, _) = self.grid_dims.expect("grid_node on a non-grid mesh");
        j * nx + i
    }

    /// Load a template mesh from a wavefront-style text file (`v` and
    /// quad `f` lines, 1-indexed).
    pub fn load_template(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut rest = Vec::new();
        let mut quads = Vec::new();
        for (ln, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let mut it = line.split_whitespace();
            match it.next() {
                Some("v") => {
                    let coords: Vec<f64> = it.map(|s| s.parse().unwrap_or(f64::NAN)).collect();
                    if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                        return Err(Error::Config(format!(
                            "{}: bad vertex on line {}",
                            path.display(),
                            ln + 1
                        )));
                    }
                    rest.push(Vec3::new(coords[0], coords[1], coords[2]));
                }
                Some("f") => {
                    let idx: Vec<usize> = it.map(|s| s.parse().unwrap_or(0)).collect();
                    if idx.len() != 4 || idx.iter().any(|&i| i == 0) {
                        return Err(Error::Config(format!(
                            "{}: bad quad on line {} (quads must have 4 corners)",
                            path.display(),
                            ln + 1
                        )));
                    }
                    quads.push([idx[0] - 1, idx[1] - 1, idx[2] - 1, idx[3] - 1]);
                }
                _ => {}
            }
        }
        if rest.is_empty() || quads.is_empty() {
            return Err(Error::Config(format!("{}: no mesh data found", path.display())));
        }
        Self::from_parts(rest, quads, None)
    }

    /// Export positions as wavefront-style text (vertex lines, then quad faces).
    pub fn export_wavefront(&self, positions: &[f64], out: &mut dyn Write) -> Result<()> {
        for i in 0..self.node_count() {
            let p = node(positions, i);
            writeln!(out, "v {} {} {}", p.x, p.y, p.z)?;
        }
        for q in &self.quads {
            writeln!(out, "f {} {} {} {}", q[0] + 1, q[1] + 1, q[2] + 1, q[3] + 1)?;
        }
        Ok(())
    }
}

/// Discrete first fundamental form of a quad at its center: bilinear shape
/// functions on the unit cell, one quadrature point.
pub fn quad_metric(positions: &[f64], q: &[usize; 4]) -> RestMetric {
    let p00 = node(positions, q[0]);
    let p10 = node(positions, q[1]);
    let p11 = node(positions, q[2]);
    let p01 = node(positions, q[3]);
    let d_xi = (p10 - p00 + p11 - p01) * 0.5;
    let d_eta = (p01 - p00 + p11 - p10) * 0.5;
    RestMetric {
        e: d_xi.dot(d_xi),
        f: d_xi.dot(d_eta),
        g: d_eta.dot(d_eta),
    }
}

fn tri_area(positions: &[f64], t: &[usize; 3]) -> f64 {
    let a = node(positions, t[0]);
    let b = node(positions, t[1]);
    let c = node(positions, t[2]);
    0.5 * (b - a).cross(c - a).norm()
}

/// Positions and velocities of the discretized sheet at a point in time.
#[derive(Debug, Clone)]
pub struct ClothState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub time: f64,
}

impl ClothState {
    /// State at rest in the mesh's rest configuration.
    pub fn at_rest(mesh: &ClothMesh) -> Self {
        ClothState {
            positions: mesh.rest_flat(),
            velocities: vec![0.0; mesh.dof()],
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(self.velocities.iter()).all(|v| v.is_finite())
    }

    /// Total kinetic energy 1/2 v' M v in joules.
    pub fn kinetic_energy(&self, mass: &MassMatrix) -> f64 {
        let mut e = 0.0;
        for i in 0..mass.node_mass.len() {
            let v = node(&self.velocities, i);
            e += 0.5 * mass.node_mass[i] * v.norm_sq();
        }
        e
    }
}

/// Diagonal (lumped) mass matrix: one scalar per node, repeated per coordinate.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    pub node_mass: Vec<f64>,
}

impl MassMatrix {
    /// Lump `density` (kg/m²) onto nodes: each node receives a quarter of
    /// the rest area of each incident quad.
    pub fn lumped(mesh: &ClothMesh, density: f64) -> Result<Self> {
        if density <= 0.0 {
            return Err(Error::Config(format!("density must be positive, got {density}")));
        }
        let mut node_mass = vec![0.0; mesh.node_count()];
        for q in &mesh.quads {
            let share = density * mesh.quad_rest_area(q) / 4.0;
            for &i in q {
                node_mass[i] += share;
            }
        }
        if node_mass.iter().any(|&m| m <= 0.0) {
            return Err(Error::Config("mesh has nodes with zero lumped mass".into()));
        }
        Ok(MassMatrix { node_mass })
    }

    pub fn total(&self) -> f64 {
        self.node_mass.iter().sum()
    }

    /// Inverse diagonal expanded to 3N entries.
    pub fn inv_diag(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.node_mass.len());
        for &m in &self.node_mass {
            let inv = 1.0 / m;
            v.extend_from_slice(&[inv, inv, inv]);
        }
        v
    }
}

/// Append one binary frame: 16-byte header (magic, N, frame index) followed
/// by the 3N little-endian float64 position vector.
pub fn write_frame(out: &mut dyn Write, frame_index: u64, positions: &[f64]) -> Result<()> {
    assert_eq!(positions.len() % 3, 0);
    let n = (positions.len() / 3) as u32;
    out.write_all(&FRAME_MAGIC)?;
    out.write_all(&n.to_le_bytes())?;
    out.write_all(&frame_index.to_le_bytes())?;
    for v in positions {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read all frames of a binary dump; returns (frame indices, position vectors).
pub fn read_frames(path: &Path) -> Result<(Vec<u64>, Vec<Vec<f64>>)> {
    let mut data = Vec::new();
    File::open(path)?.read_to_end(&mut data)?;
    let mut indices = Vec::new();
    let mut frames = Vec::new();
    let mut off = 0;
    while off < data.len() {
        if data.len() - off < 16 {
            return Err(Error::Validation(format!("{}: truncated frame header", path.display())));
        }
        if data[off..off + 4] != FRAME_MAGIC {
            return Err(Error::Validation(format!("{}: bad frame magic", path.display())));
        }
        let n = u32::from_le_bytes(data[off + 4..off + 8].try_into().unwrap()) as usize;
        let idx = u64::from_le_bytes(data[off + 8..off + 16].try_into().unwrap());
        off += 16;
        let bytes = 3 * n * 8;
        if data.len() - off < bytes {
            return Err(Error::Validation(format!("{}: truncated frame payload", path.display())));
        }
        let mut pos = Vec::with_capacity(3 * n);
        for k in 0..3 * n {
            let s = off + 8 * k;
            pos.push(f64::from_le_bytes(data[s..s + 8].try_into().unwrap()));
        }
        off += bytes;
        indices.push(idx);
        frames.push(pos);
    }
    Ok((indices, frames))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid_counts() {
        let m = ClothMesh::grid(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.quads.len(), 1);
        assert_eq!(m.tris.len(), 2);
        // 4 boundary edges plus the split diagonal.
        assert_eq!(m.edges.len(), 5);
    }

    #[test]
    fn paper_resolution_counts() {
        let m = ClothMesh::grid(7, 9, 0.42, 0.594).unwrap();
        assert_eq!(m.node_count(), 63);
        assert_eq!(m.quads.len(), 48);
        assert_eq!(m.tris.len(), 96);
    }

    #[test]
    fn uniform_rest_metric() {
        let m = ClothMesh::grid(3, 2, 2.0, 1.0).unwrap();
        for rm in &m.rest_metric {
            assert!((rm.e - 1.0).abs() < 1e-12);
            assert!(rm.f.abs() < 1e-12);
            assert!((rm.g - 1.0).abs() < 1e-12);
            assert!(rm.is_positive_definite());
        }
    }

    #[test]
    fn lumped_mass_symmetry_and_total() {
        let m = ClothMesh::grid(2, 2, 1.0, 1.0).unwrap();
        let mass = MassMatrix::lumped(&m, 1.0).unwrap();
        for &nm in &mass.node_mass {
            assert!((nm - 0.25).abs() < 1e-15);
        }

        let a2 = ClothMesh::grid(7, 9, 0.42, 0.594).unwrap();
        for density in [0.1042, 0.3046] {
            let mass = MassMatrix::lumped(&a2, density).unwrap();
            let expected = density * 0.42 * 0.594;
            assert!(
                (mass.total() - expected).abs() <= 1e-12 * expected,
                "total {} vs {}",
                mass.total(),
                expected
            );
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(ClothMesh::grid(1, 2, 1.0, 1.0).is_err());
        assert!(ClothMesh::grid(3, 3, 0.0, 1.0).is_err());
        assert!(MassMatrix::lumped(&ClothMesh::grid(2, 2, 1.0, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn frame_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frames.bin");
        let mut buf = Vec::new();
        let f0: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
        let f1: Vec<f64> = (0..6).map(|i| -(i as f64)).collect();
        write_frame(&mut buf, 0, &f0).unwrap();
        write_frame(&mut buf, 1, &f1).unwrap();
        std::fs::write(&path, &buf).unwrap();
        let (idx, frames) = read_frames(&path).unwrap();
        assert_eq!(idx, vec![0, 1]);
        assert_eq!(frames, vec![f0, f1]);
    }
}
