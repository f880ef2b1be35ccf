use stripfold::constraints::GraspConstraint;
use stripfold::fem::{KinematicState, StressModel};
use stripfold::model::{build_strip_mesh, material_from_ratios, StripGeometry};
use stripfold::solver::static_solve::{solve_static, NewtonOptions};
use stripfold::system::StripSystem;

fn run(nx: usize, nz: usize) {
    let mat = material_from_ratios(1e-5, 20.0, 0.0, 1.0, 9.81).unwrap();
    let geo = StripGeometry::new(0.3, mat.thickness, 1.0, 0.165).unwrap();
    let mesh = build_strip_mesh(geo, nx, nz).unwrap();
    let sys = StripSystem::new(mesh, mat, StressModel::StVenantKirchhoff, None, false, true).unwrap();
    let mut state = KinematicState::zeros(sys.mesh().node_count());
    let pose = GraspConstraint::reference_pose(sys.mesh());
    let mut opts = NewtonOptions::for_weight(sys.weight);
    opts.tolerance = 1e-6 * sys.weight;
    let t0 = std::time::Instant::now();
    let res = solve_static(&sys, &mut state, &pose, &opts, None);
    let tip = sys.mesh().nz / 2;
    let expected = 1.5 * 1.0 * 9.81 * 0.3f64.powi(4) / (mat.youngs_modulus * mat.thickness.powi(2));
    let sag = -state.u[2 * tip + 1];
    println!(
        "nx={nx} nz={nz}: sag={:.6e} expected={:.6e} rel={:.4} iters={:?} t={:?}",
        sag,
        expected,
        (sag - expected).abs() / expected,
        res.map(|r| r.iterations),
        t0.elapsed()
    );
}

fn main() {
    run(240, 4);
    run(480, 4);
    run(480, 8);
    run(960, 8);
    run(720, 6);
}
