//! Validation metrics against a reference marker trace: the mass-weighted
//! absolute error per frame, its spatial standard deviation, and the time
//! mean used as the fitting objective. Masked (invisible) markers are
//! excluded from the computation; no interpolation is performed.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::node;
use crate::mesh::{read_frames, write_frame, MassMatrix};
use crate::scenario::trace::Trace;

/// Per-marker reference positions with a visibility mask.
#[derive(Debug, Clone)]
pub struct ReferenceTrace {
    /// Mesh node index of each marker.
    pub marker_nodes: Vec<usize>,
    /// 3 × marker_count positions per frame.
    pub frames: Vec<Vec<f64>>,
    /// mask[frame][marker] — false entries are excluded from all metrics.
    pub mask: Vec<Vec<bool>>,
}

impl ReferenceTrace {
    /// Write marker frames in the binary dump format plus a mask sidecar
    /// CSV of (frame, marker, visible) rows.
    pub fn write(&self, frames_path: &Path, mask_path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            write_frame(&mut buf, i as u64, f)?;
        }
        std::fs::write(frames_path, buf)?;
        let mut csv = String::from("frame,marker,visible\n");
        for (fi, row) in self.mask.iter().enumerate() {
            for (mi, vis) in row.iter().enumerate() {
                csv.push_str(&format!("{fi},{mi},{}\n", u8::from(*vis)));
            }
        }
        std::fs::write(mask_path, csv)?;
        Ok(())
    }

    /// Read marker frames; the mask sidecar is optional (all visible when
    /// absent).
    pub fn read(frames_path: &Path, mask_path: Option<&Path>, marker_nodes: Vec<usize>) -> Result<Self> {
        let (_, frames) = read_frames(frames_path)?;
        for f in &frames {
            if f.len() != 3 * marker_nodes.len() {
                return Err(Error::Validation(format!(
                    "reference frame holds {} markers, mapping expects {}",
                    f.len() / 3,
                    marker_nodes.len()
                )));
            }
        }
        let mut mask = vec![vec![true; marker_nodes.len()]; frames.len()];
        if let Some(path) = mask_path {
            let text = std::fs::read_to_string(path)?;
            for (ln, line) in text.lines().enumerate() {
                if ln == 0 && line.starts_with("frame") {
                    continue;
                }
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 3 {
                    return Err(Error::Validation(format!(
                        "{}: bad mask line {}",
                        path.display(),
                        ln + 1
                    )));
                }
                let fi: usize = fields[0].trim().parse().map_err(|_| {
                    Error::Validation(format!("{}: bad frame on line {}", path.display(), ln + 1))
                })?;
                let mi: usize = fields[1].trim().parse().map_err(|_| {
                    Error::Validation(format!("{}: bad marker on line {}", path.display(), ln + 1))
                })?;
                let vis = fields[2].trim() != "0";
                if fi < mask.len() && mi < marker_nodes.len() {
                    mask[fi][mi] = vis;
                }
            }
        }
        Ok(ReferenceTrace {
            marker_nodes,
            frames,
            mask,
        })
    }

    /// Extract a synthetic reference from a simulated trace, optionally
    /// adding isotropic Gaussian marker noise (meters).
    pub fn from_trace(trace: &Trace, marker_nodes: &[usize], noise_std: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frames = Vec::with_capacity(trace.frames.len());
        for f in &trace.frames {
            let mut row = Vec::with_capacity(3 * marker_nodes.len());
            for &n in marker_nodes {
                let p = node(f, n);
                let jitter = if noise_std > 0.0 {
                    crate::math::Vec3::new(
                        gaussian(&mut rng) * noise_std,
                        gaussian(&mut rng) * noise_std,
                        gaussian(&mut rng) * noise_std,
                    )
                } else {
                    crate::math::Vec3::ZERO
                };
                let q = p + jitter;
                row.extend_from_slice(&[q.x, q.y, q.z]);
            }
            frames.push(row);
        }
        let mask = vec![vec![true; marker_nodes.len()]; frames.len()];
        ReferenceTrace {
            marker_nodes: marker_nodes.to_vec(),
            frames,
            mask,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Per-frame error series and their time mean.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// Mass-weighted absolute error per frame, meters.
    pub e: Vec<f64>,
    /// Spatial standard deviation of per-marker errors, meters.
    pub s: Vec<f64>,
    /// Mean of e over frames with at least one visible marker.
    pub mean_e: f64,
}

impl MetricsReport {
    pub fn write_csv(&self, times: &[f64], path: &Path) -> Result<()> {
        let mut out = String::from("frame,time,e,s\n");
        for i in 0..self.e.len() {
            let t = times.get(i).copied().unwrap_or(i as f64);
            out.push_str(&format!("{i},{t:.6},{:.9},{:.9}\n", self.e[i], self.s[i]));
        }
        out.push_str(&format!("# mean_e,{:.9}\n", self.mean_e));
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Compute e_i = sqrt((φ − φ̂)' M (φ − φ̂)) restricted to the visible
/// markers, and s_i, the spatial standard deviation of the per-marker
/// Euclidean errors.
pub fn error_metrics(
    trace: &Trace,
    reference: &ReferenceTrace,
    mass: &MassMatrix,
) -> Result<MetricsReport> {
    let frames = trace.frames.len().min(reference.frames.len());
    if frames == 0 {
        return Err(Error::Validation("no overlapping frames".into()));
    }
    let mut e = Vec::with_capacity(frames);
    let mut s = Vec::with_capacity(frames);
    let mut sum = 0.0;
    let mut counted = 0usize;
    for i in 0..frames {
        let sim = &trace.frames[i];
        let reff = &reference.frames[i];
        let mut weighted = 0.0;
        let mut dists: Vec<f64> = Vec::new();
        for (mi, &n) in reference.marker_nodes.iter().enumerate() {
            if !reference.mask[i][mi] {
                continue;
            }
            let p = node(sim, n);
            let q = crate::math::Vec3::new(reff[3 * mi], reff[3 * mi + 1], reff[3 * mi + 2]);
            let d = (p - q).norm();
            weighted += mass.node_mass[n] * d * d;
            dists.push(d);
        }
        if dists.is_empty() {
            e.push(0.0);
            s.push(0.0);
            continue;
        }
        let ei = weighted.sqrt();
        let mean = dists.iter().sum::<f64>() / dists.len() as f64;
        let var = dists.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / dists.len() as f64;
        e.push(ei);
        s.push(var.sqrt());
        sum += ei;
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::Validation(
            "every frame is fully masked; no metric can be computed".into(),
        ));
    }
    Ok(MetricsReport {
        e,
        s,
        mean_e: sum / counted as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::ClothMesh;

    fn toy_trace(mesh: &ClothMesh, frames: usize) -> Trace {
        let flat = mesh.rest_flat();
        Trace {
            times: (0..frames).map(|i| i as f64 * 0.01).collect(),
            frames: vec![flat; frames],
            digests: vec![],
            sim_seconds: 0.0,
            recorded_seconds: 0.01 * (frames - 1) as f64,
        }
    }

    #[test]
    fn identical_traces_have_zero_error() {
        let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
        let mass = MassMatrix::lumped(&mesh, 0.1).unwrap();
        let trace = toy_trace(&mesh, 5);
        let marker_nodes: Vec<usize> = (0..mesh.node_count()).collect();
        let reference = ReferenceTrace::from_trace(&trace, &marker_nodes, 0.0, 0);
        let m = error_metrics(&trace, &reference, &mass).unwrap();
        assert!(m.e.iter().all(|v| *v == 0.0));
        assert!(m.s.iter().all(|v| *v == 0.0));
        assert_eq!(m.mean_e, 0.0);
    }

    #[test]
    fn uniform_offset_matches_closed_form() {
        let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
        let mass = MassMatrix::lumped(&mesh, 0.25).unwrap();
        let trace = toy_trace(&mesh, 3);
        let marker_nodes: Vec<usize> = vec![0, 2, 4, 8];
        let mut reference = ReferenceTrace::from_trace(&trace, &marker_nodes, 0.0, 0);
        let d = 0.05;
        for f in &mut reference.frames {
            for mi in 0..marker_nodes.len() {
                f[3 * mi] += d;
            }
        }
        let m = error_metrics(&trace, &reference, &mass).unwrap();
        let restricted_mass: f64 = marker_nodes.iter().map(|&n| mass.node_mass[n]).sum();
        let expect = d * restricted_mass.sqrt();
        for (ei, si) in m.e.iter().zip(&m.s) {
            assert!((ei - expect).abs() < 1e-12);
            assert!(si.abs() < 1e-12);
        }
    }

    #[test]
    fn masking_is_local() {
        let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
        let mass = MassMatrix::lumped(&mesh, 0.25).unwrap();
        let trace = toy_trace(&mesh, 3);
        let marker_nodes: Vec<usize> = vec![0, 4, 8];
        let mut reference = ReferenceTrace::from_trace(&trace, &marker_nodes, 0.0, 0);
        // Offset marker 1 and mask marker 2 everywhere: the error must be
        // exactly the marker-1 contribution.
        for f in &mut reference.frames {
            f[3 + 2] += 0.1; // marker 1, z
            f[6] += 99.0; // marker 2 corrupted but masked
        }
        for row in &mut reference.mask {
            row[2] = false;
        }
        let m = error_metrics(&trace, &reference, &mass).unwrap();
        let expect = 0.1 * mass.node_mass[4].sqrt();
        for ei in &m.e {
            assert!((ei - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn random_residuals_match_direct_summation() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mesh = ClothMesh::grid(4, 4, 1.0, 1.0).unwrap();
        let mass = MassMatrix::lumped(&mesh, 0.3).unwrap();
        let mut trace = toy_trace(&mesh, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for f in &mut trace.frames {
            for v in f.iter_mut() {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
        let marker_nodes: Vec<usize> = (0..mesh.node_count()).step_by(2).collect();
        let reference = ReferenceTrace::from_trace(&toy_trace(&mesh, 4), &marker_nodes, 0.0, 0);
        let m = error_metrics(&trace, &reference, &mass).unwrap();
        // Direct reimplementation.
        for (i, f) in trace.frames.iter().enumerate() {
            let mut acc = 0.0;
            for (mi, &n) in marker_nodes.iter().enumerate() {
                let dx = f[3 * n] - reference.frames[i][3 * mi];
                let dy = f[3 * n + 1] - reference.frames[i][3 * mi + 1];
                let dz = f[3 * n + 2] - reference.frames[i][3 * mi + 2];
                acc += mass.node_mass[n] * (dx * dx + dy * dy + dz * dz);
            }
            assert!((m.e[i] - acc.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_with_mask_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
        let trace = toy_trace(&mesh, 3);
        let marker_nodes = vec![0, 4];
        let mut reference = ReferenceTrace::from_trace(&trace, &marker_nodes, 0.001, 7);
        reference.mask[1][0] = false;
        let fp = dir.path().join("ref.bin");
        let mp = dir.path().join("ref_mask.csv");
        reference.write(&fp, &mp).unwrap();
        let loaded = ReferenceTrace::read(&fp, Some(&mp), marker_nodes).unwrap();
        assert_eq!(loaded.mask, reference.mask);
        for (a, b) in loaded.frames.iter().zip(&reference.frames) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }
}
