//! Recorded trajectories: per-frame positions plus a digest of each step
//! report, with binary frame export and a CSV digest sidecar.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{read_frames, write_frame, ClothMesh};
use crate::stepper::StepReport;

/// Compact per-step record kept alongside each frame (frame 0 has none).
#[derive(Debug, Clone, Default)]
pub struct StepDigest {
    pub iterations: usize,
    pub c_residual: f64,
    pub h_min: f64,
    pub exchanges: usize,
    pub active_contacts: [usize; 4],
    pub friction_power: f64,
    pub cone_excess: f64,
    pub omega_retries: usize,
    pub verification_failed: bool,
}

impl From<&StepReport> for StepDigest {
    fn from(r: &StepReport) -> Self {
        StepDigest {
            iterations: r.iterations,
            c_residual: r.c_residual,
            h_min: r.h_min,
            exchanges: r.exchanges,
            active_contacts: r.active_contacts,
            friction_power: r.friction_power,
            cone_excess: r.cone_excess,
            omega_retries: r.omega_retries,
            verification_failed: r.verification_failed,
        }
    }
}

/// A recorded run: frame i holds the positions at time times[i];
/// digests[i-1] describes the step that produced frame i.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
    pub digests: Vec<StepDigest>,
    /// Wall time spent inside the stepping loop, seconds.
    pub sim_seconds: f64,
    /// Simulated duration, seconds.
    pub recorded_seconds: f64,
}

impl Trace {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Wall-time quotient: simulation time over recorded duration.
    pub fn time_quotient(&self) -> f64 {
        self.sim_seconds / self.recorded_seconds.max(f64::MIN_POSITIVE)
    }

    /// Write all frames as one binary dump.
    pub fn write_frames(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            write_frame(&mut buf, i as u64, f)?;
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_frames_from(path: &Path, dt: f64) -> Result<Trace> {
        let (_, frames) = read_frames(path)?;
        let times = (0..frames.len()).map(|i| i as f64 * dt).collect();
        let recorded = dt * frames.len().saturating_sub(1) as f64;
        Ok(Trace {
            times,
            frames,
            digests: Vec::new(),
            sim_seconds: 0.0,
            recorded_seconds: recorded,
        })
    }

    /// Write the per-step digest CSV.
    pub fn write_digests(&self, path: &Path) -> Result<()> {
        let mut out = String::from(
            "frame,time,iterations,c_residual,h_min,exchanges,obstacle_contacts,self_contacts,cusp_contacts,stick_contacts,friction_power,cone_excess,omega_retries,verification_failed\n",
        );
        for (i, d) in self.digests.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.6},{},{:.3e},{:.3e},{},{},{},{},{},{:.6e},{:.6e},{},{}\n",
                i + 1,
                self.times[i + 1],
                d.iterations,
                d.c_residual,
                d.h_min,
                d.exchanges,
                d.active_contacts[0],
                d.active_contacts[1],
                d.active_contacts[2],
                d.active_contacts[3],
                d.friction_power,
                d.cone_excess,
                d.omega_retries,
                d.verification_failed,
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Export one wavefront text mesh per frame into a directory.
    pub fn write_wavefront_frames(&self, mesh: &ClothMesh, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, f) in self.frames.iter().enumerate() {
            let mut buf = Vec::new();
            mesh.export_wavefront(f, &mut buf)?;
            let mut file = std::fs::File::create(dir.join(format!("frame_{i:05}.obj")))?;
            file.write_all(&buf)?;
        }
        Ok(())
    }

    /// Largest node-wise position difference against another trace.
    pub fn max_node_distance(&self, other: &Trace) -> Result<f64> {
        if self.frames.len() != other.frames.len() {
            return Err(Error::Validation(format!(
                "traces have different frame counts ({} vs {})",
                self.frames.len(),
                other.frames.len()
            )));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.frames.iter().zip(&other.frames) {
            for i in 0..a.len() / 3 {
                let dx = a[3 * i] - b[3 * i];
                let dy = a[3 * i + 1] - b[3 * i + 1];
                let dz = a[3 * i + 2] - b[3 * i + 2];
                worst = worst.max((dx * dx + dy * dy + dz * dz).sqrt());
            }
        }
        Ok(worst)
    }
}
