use cloth_sim::mesh::{ClothMesh, ClothState, MassMatrix};
use cloth_sim::math::Vec3;
use cloth_sim::obstacles::{ImplicitObstacle, ObstacleShape};
use cloth_sim::stepper::{Scene, StepConfig, Stepper};

fn main() {
    let mesh = ClothMesh::grid(3, 3, 1.0, 1.0).unwrap();
    let mass = MassMatrix::lumped(&mesh, 0.3).unwrap();
    let scene = Scene {
        mesh, mass,
        obstacles: vec![ImplicitObstacle::fixed(ObstacleShape::Plane { point: Vec3::ZERO, normal: Vec3::new(0.0,0.0,1.0) }, 0.4)],
        cusps: vec![], cusp_mu: 0.0, sticks: vec![], pins: vec![],
        self_collision: false, tau0: 0.002, cloth_mu: 0.0, face_midpoint_rows: false,
    };
    let state = ClothState::at_rest(&scene.mesh);
    let mut stepper = Stepper::new(StepConfig::default());
    let (next, report) = stepper.step(&scene, &state).unwrap();
    println!("iterations={} exchanges={} h_min={:.3e} dx_max={:.3e} c={:.3e}", report.iterations, report.exchanges, report.h_min, report.dx_max, report.c_residual);
    println!("active={:?}", report.active_contacts);
    println!("warm_working={:?}", stepper.warm_working().len());
    println!("max dz={:.3e}", next.positions.iter().zip(&state.positions).map(|(a,b)| (a-b).abs()).fold(0.0f64, f64::max));
}
