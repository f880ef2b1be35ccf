use stripfold::continuation::OnCritical;
use stripfold::paths;
use stripfold::scenario::{PathGenerator, Scenario, ScenarioConfig};

fn main() {
    for &(eta_b, z) in &[(150.0, 0.09), (150.0, 0.12), (400.0, 0.09)] {
        let mut config = ScenarioConfig::default();
        config.material.eta_b = eta_b;
        config.path.generator = PathGenerator::XTranslate;
        config.path.z_meters = z;
        config.continuation.snapshot_stride = 20;
        let sc = Scenario::build(config).unwrap();
        let path = paths::generate(&sc, PathGenerator::XTranslate).unwrap();
        let initial = paths::initial_state_for(&sc, &path).unwrap();
        let mut tracer = sc.tracer_with_friction(false);
        tracer.options.on_critical = OnCritical::Stop;
        let r = match tracer.trace_path(&path, &initial) {
            Ok(r) => r, Err(e) => { println!("eta_b={eta_b} z={z}: {e}"); continue; }
        };
        println!("== eta_b={eta_b} z={z}: critical={:?}", r.first_critical_lambda());
        let mesh = sc.system.mesh();
        let j = mesh.nz / 2;
        for snap in &r.snapshots {
            let nc = sc.system.touching_nodes(&snap.state).len();
            let bound = sc.system.contact_boundary(&snap.state);
            print!("l={:.3} contacts={} bound={:?} |", snap.lambda, nc, bound.map(|b| (b*1e3).round()/1e3));
            for i in (0..=mesh.nx).step_by(12) {
                let n = i * (mesh.nz + 1) + j;
                let w = snap.state.world(mesh, n);
                print!(" {:.2},{:.2}", w[0], w[1]);
            }
            println!();
        }
    }
}
