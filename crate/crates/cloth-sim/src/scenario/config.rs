//! Declarative scenario configuration: TOML files with strict unknown-key
//! rejection, resolved into a runnable scene. File references (stick
//! trajectories, template meshes) are relative to the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::math::{set_node, node, Vec3};
use crate::mesh::{ClothMesh, ClothState, MassMatrix};
use crate::obstacles::{
    needle_cusps, ImplicitObstacle, MotionScript, ObstacleShape, RotationScript, StickObstacle,
};
use crate::stepper::{Scene, ScriptedNode, SolverChoice, StepConfig};

fn default_dt() -> f64 {
    0.01
}
fn default_eps0() -> f64 {
    1e-6
}
fn default_eps1() -> f64 {
    1e-5
}
fn default_eps2() -> f64 {
    1e-6
}
fn default_omega() -> f64 {
    0.45
}
fn default_omega_min() -> f64 {
    0.05
}
fn default_omega_retries() -> usize {
    3
}
fn default_max_outer() -> usize {
    100
}
fn default_thickness() -> f64 {
    0.002
}
fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}
fn default_stick_segments() -> usize {
    8
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub mesh: MeshSection,
    pub material: MaterialSection,
    #[serde(default)]
    pub placement: PlacementSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, rename = "obstacle")]
    pub obstacles: Vec<ObstacleSection>,
    #[serde(default, rename = "stick")]
    pub sticks: Vec<StickSection>,
    #[serde(default, rename = "pin")]
    pub pins: Vec<PinSection>,
    #[serde(default)]
    pub reference: ReferenceSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_gravity")]
    pub gravity: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub height: Option<f64>,
    /// Wavefront-style template file, alternative to the grid fields.
    #[serde(default)]
    pub template: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    /// Area density, kg/m².
    pub density: f64,
    /// Rayleigh damping α, 1/s.
    #[serde(default)]
    pub damping: f64,
    /// Virtual-mass factor δ scaling gravity.
    #[serde(default)]
    pub virtual_mass: f64,
    /// Cloth thickness τ0, m.
    #[serde(default = "default_thickness")]
    pub thickness: f64,
    /// Cloth-on-cloth friction coefficient.
    #[serde(default)]
    pub cloth_friction: f64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PlacementSection {
    /// "flat" keeps the sheet in the x-y plane, "vertical" maps it to x-z.
    #[serde(default)]
    pub orientation: Orientation,
    /// Rotation about the z axis, degrees, applied about the sheet center.
    #[serde(default)]
    pub rotate_z_deg: f64,
    #[serde(default)]
    pub translate: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    Flat,
    Vertical,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub kind: SolverKind,
    #[serde(default = "default_eps0")]
    pub eps0: f64,
    #[serde(default = "default_eps1")]
    pub eps1: f64,
    #[serde(default = "default_eps2")]
    pub eps2: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_omega_min")]
    pub omega_min: f64,
    #[serde(default = "default_omega_retries")]
    pub omega_retries: usize,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_true")]
    pub self_collision: bool,
    #[serde(default)]
    pub face_midpoint_rows: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    #[default]
    ActiveSet,
    InteriorPoint,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum ObstacleSection {
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        #[serde(default)]
        friction: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
        #[serde(default)]
        friction: f64,
        #[serde(default)]
        rotation: Option<RotationSection>,
    },
    Cylinder {
        point: [f64; 3],
        axis: [f64; 3],
        radius: f64,
        #[serde(default)]
        friction: f64,
    },
    NeedleField {
        c1: f64,
        c2: f64,
        #[serde(default)]
        friction: f64,
        /// Generate cusp constraints inside the given x/y window.
        #[serde(default)]
        cusp_window: Option<[f64; 4]>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationSection {
    pub axis: [f64; 3],
    pub start: f64,
    pub end: f64,
    pub angular_velocity: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StickSection {
    pub csv: String,
    pub radius: f64,
    #[serde(default = "default_stick_segments")]
    pub segments: usize,
    #[serde(default)]
    pub friction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinSection {
    /// Raw node index, or grid coordinates for grid meshes.
    #[serde(default)]
    pub node: Option<usize>,
    #[serde(default)]
    pub grid: Option<[usize; 2]>,
    /// Hold the node at its initial placement for the whole run.
    #[serde(default)]
    pub hold: bool,
    /// Keyframes [t, x, y, z]; piecewise-linear.
    #[serde(default)]
    pub keys: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Marker grid dimensions mapped onto the mesh grid.
    pub markers_nx: usize,
    pub markers_ny: usize,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection {
            markers_nx: 4,
            markers_ny: 5,
        }
    }
}

/// A fully resolved scenario ready to run.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub name: String,
    pub scene: Scene,
    pub step: StepConfig,
    pub initial: ClothState,
    pub duration: f64,
    pub marker_nodes: Vec<usize>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: ScenarioConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenario.duration <= 0.0 || self.scenario.dt <= 0.0 {
            return Err(Error::Config("duration and dt must be positive".into()));
        }
        if self.material.density <= 0.0 {
            return Err(Error::Config("density must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.solver.omega) {
            return Err(Error::Config(format!(
                "omega must lie in [0, 0.5), got {}",
                self.solver.omega
            )));
        }
        if self.mesh.template.is_none()
            && (self.mesh.nx.is_none()
                || self.mesh.ny.is_none()
                || self.mesh.width.is_none()
                || self.mesh.height.is_none())
        {
            return Err(Error::Config(
                "mesh needs either a template or all of nx, ny, width, height".into(),
            ));
        }
        for pin in &self.pins {
            if pin.node.is_none() && pin.grid.is_none() {
                return Err(Error::Config("pin needs a node index or grid coordinates".into()));
            }
            if !pin.hold && pin.keys.is_empty() {
                return Err(Error::Config("pin needs keyframes or hold = true".into()));
            }
        }
        Ok(())
    }

    /// Resolve the config into a scene; `base` anchors relative file paths.
    pub fn build(&self, base: &Path) -> Result<BuiltScenario> {
        let mesh = match &self.mesh.template {
            Some(rel) => ClothMesh::load_template(&resolve(base, rel))?,
            None => ClothMesh::grid(
                self.mesh.nx.unwrap(),
                self.mesh.ny.unwrap(),
                self.mesh.width.unwrap(),
                self.mesh.height.unwrap(),
            )?,
        };
        let mass = MassMatrix::lumped(&mesh, self.material.density)?;

        // Initial placement of the rest shape.
        let mut initial = ClothState::at_rest(&mesh);
        let center = {
            let mut c = Vec3::ZERO;
            for i in 0..mesh.node_count() {
                c += node(&initial.positions, i);
            }
            c / mesh.node_count() as f64
        };
        let angle = self.placement.rotate_z_deg.to_radians();
        let (s, co) = angle.sin_cos();
        let tr = Vec3::new(
            self.placement.translate[0],
            self.placement.translate[1],
            self.placement.translate[2],
        );
        for i in 0..mesh.node_count() {
            let p = node(&initial.positions, i);
            let p = match self.placement.orientation {
                Orientation::Flat => p,
                Orientation::Vertical => Vec3::new(p.x, p.z, p.y),
            };
            let c = match self.placement.orientation {
                Orientation::Flat => center,
                Orientation::Vertical => Vec3::new(center.x, center.z, center.y),
            };
            let d = p - c;
            let rotated = Vec3::new(co * d.x - s * d.y, s * d.x + co * d.y, d.z) + c;
            set_node(&mut initial.positions, i, rotated + tr);
        }

        let mut obstacles = Vec::new();
        let mut cusps = Vec::new();
        let mut cusp_mu = 0.0;
        for o in &self.obstacles {
            match o {
                ObstacleSection::Plane { point, normal, friction } => {
                    obstacles.push(ImplicitObstacle::fixed(
                        ObstacleShape::Plane {
                            point: arr(*point),
                            normal: arr(*normal),
                        },
                        *friction,
                    ));
                }
                ObstacleSection::Sphere { center, radius, friction, rotation } => {
                    let motion = MotionScript {
                        translation: vec![],
                        rotation: rotation.as_ref().map(|r| RotationScript {
                            axis: arr(r.axis),
                            start: r.start,
                            end: r.end,
                            angular_velocity: r.angular_velocity,
                        }),
                    };
                    obstacles.push(ImplicitObstacle {
                        shape: ObstacleShape::Sphere {
                            center: arr(*center),
                            radius: *radius,
                        },
                        friction: *friction,
                        motion,
                    });
                }
                ObstacleSection::Cylinder { point, axis, radius, friction } => {
                    obstacles.push(ImplicitObstacle::fixed(
                        ObstacleShape::Cylinder {
                            point: arr(*point),
                            axis: arr(*axis),
                            radius: *radius,
                        },
                        *friction,
                    ));
                }
                ObstacleSection::NeedleField { c1, c2, friction, cusp_window } => {
                    obstacles.push(ImplicitObstacle::fixed(
                        ObstacleShape::NeedleField { c1: *c1, c2: *c2 },
                        *friction,
                    ));
                    if let Some([x0, x1, y0, y1]) = cusp_window {
                        cusps.extend(needle_cusps(*c1, *c2, (*x0, *x1), (*y0, *y1)));
                        cusp_mu = *friction;
                    }
                }
            }
        }

        let mut sticks = Vec::new();
        for s in &self.sticks {
            sticks.push(StickObstacle::from_csv(
                &resolve(base, &s.csv),
                s.radius,
                s.segments,
                s.friction,
            )?);
        }

        let mut pins = Vec::new();
        for pin in &self.pins {
            let node_idx = match (pin.node, pin.grid) {
                (Some(n), _) => n,
                (None, Some([i, j])) => {
                    if mesh.grid_dims.is_none() {
                        return Err(Error::Config(
                            "grid pin coordinates need a grid mesh".into(),
                        ));
                    }
                    mesh.grid_node(i, j)
                }
                _ => unreachable!("validated"),
            };
            if node_idx >= mesh.node_count() {
                return Err(Error::Config(format!("pin node {node_idx} out of range")));
            }
            let trajectory = if pin.hold {
                vec![(0.0, node(&initial.positions, node_idx))]
            } else {
                pin.keys
                    .iter()
                    .map(|k| (k[0], Vec3::new(k[1], k[2], k[3])))
                    .collect()
            };
            pins.push(ScriptedNode {
                node: node_idx,
                trajectory,
            });
        }

        let marker_nodes = marker_mapping(&mesh, self.reference.markers_nx, self.reference.markers_ny);

        let scene = Scene {
            mesh,
            mass,
            obstacles,
            cusps,
            cusp_mu,
            sticks,
            pins,
            self_collision: self.solver.self_collision,
            tau0: self.material.thickness,
            cloth_mu: self.material.cloth_friction,
            face_midpoint_rows: self.solver.face_midpoint_rows,
        };
        let step = StepConfig {
            dt: self.scenario.dt,
            eps0: self.solver.eps0,
            eps1: self.solver.eps1,
            eps2: self.solver.eps2,
            max_outer: self.solver.max_outer,
            omega: self.solver.omega,
            omega_min: self.solver.omega_min,
            omega_retries: self.solver.omega_retries,
            damping: self.material.damping,
            virtual_mass: self.material.virtual_mass,
            gravity: arr(self.scenario.gravity),
            solver: match self.solver.kind {
                SolverKind::ActiveSet => SolverChoice::ActiveSet,
                SolverKind::InteriorPoint => SolverChoice::InteriorPoint,
            },
        };
        Ok(BuiltScenario {
            name: self.scenario.name.clone(),
            scene,
            step,
            initial,
            duration: self.scenario.duration,
            marker_nodes,
        })
    }
}

fn arr(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Map a coarse marker grid onto mesh nodes. For a (2a−1)×(2b−1) mesh the
/// a×b markers land on every other node; general grids use the nearest
/// node by index rounding. Non-grid meshes fall back to the first nodes.
pub fn marker_mapping(mesh: &ClothMesh, markers_nx: usize, markers_ny: usize) -> Vec<usize> {
    match mesh.grid_dims {
        Some((nx, ny)) => {
            let mut nodes = Vec::with_capacity(markers_nx * markers_ny);
            for b in 0..markers_ny {
                for a in 0..markers_nx {
                    let i = if markers_nx > 1 {
                        (a as f64 / (markers_nx - 1) as f64 * (nx - 1) as f64).round() as usize
                    } else {
                        0
                    };
                    let j = if markers_ny > 1 {
                        (b as f64 / (markers_ny - 1) as f64 * (ny - 1) as f64).round() as usize
                    } else {
                        0
                    };
                    nodes.push(mesh.grid_node(i, j));
                }
            }
            nodes
        }
        None => (0..markers_nx * markers_ny.min(mesh.node_count())).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let text = r#"
            [scenario]
            name = "smoke"
            duration = 0.5

            [mesh]
            nx = 3
            ny = 3
            width = 0.3
            height = 0.3

            [material]
            density = 0.1
        "#;
        let cfg: ScenarioConfig = toml::from_str(text).unwrap();
        cfg.validate().unwrap();
        let built = cfg.build(Path::new(".")).unwrap();
        assert_eq!(built.scene.mesh.node_count(), 9);
        assert_eq!(built.step.dt, 0.01);
        assert_eq!(built.marker_nodes.len(), 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
            [scenario]
            name = "bad"
            duration = 1.0
            typo_field = 3
            [mesh]
            nx = 2
            ny = 2
            width = 1.0
            height = 1.0
            [material]
            density = 0.1
        "#;
        assert!(toml::from_str::<ScenarioConfig>(text).is_err());
    }

    #[test]
    fn marker_mapping_refines_four_by_five() {
        let mesh = ClothMesh::grid(7, 9, 0.42, 0.594).unwrap();
        let nodes = marker_mapping(&mesh, 4, 5);
        assert_eq!(nodes.len(), 20);
        assert_eq!(nodes[0], mesh.grid_node(0, 0));
        assert_eq!(nodes[3], mesh.grid_node(6, 0));
        assert_eq!(nodes[19], mesh.grid_node(6, 8));
    }
}
