use stripfold::continuation::OnCritical;
use stripfold::paths;
use stripfold::scenario::{PathGenerator, Scenario, ScenarioConfig};
use stripfold::solver::{integrate_dynamic, smallest_eigenvalue};

fn main() {
    let mut config = ScenarioConfig::default();
    config.material.eta_b = 150.0;
    config.path.generator = PathGenerator::XTranslate;
    config.path.z_meters = 0.09;
    let sc = Scenario::build(config).unwrap();
    let path = paths::generate(&sc, PathGenerator::XTranslate).unwrap();
    let initial = paths::initial_state_for(&sc, &path).unwrap();

    // Stop-mode trace to get the critical point and last stable state
    let mut tracer = sc.tracer_with_friction(false);
    tracer.options.on_critical = OnCritical::Stop;
    let rec = tracer.trace_path(&path, &initial).unwrap();
    let lc = rec.first_critical_lambda().expect("critical point");
    println!("lambda_c = {lc:.5}");
    let last_state = rec.final_state.clone();

    // eigen mode at last stable
    let (_, k) = sc.system.residual_and_reduced_tangent(&last_state, &sc.system.detect_active(&last_state)).unwrap();
    let eig = smallest_eigenvalue(&k, &sc.eigen_options()).unwrap();
    println!("mu at last stable: {:.4e}", eig.mu_min);

    let pose = path.pose_at((lc + 0.00145f64).min(1.0)).unwrap();
    let mut start = last_state.clone();
    sc.system.dofmap.scatter_add(&eig.mode, 1e-3 * 0.3, &mut start.u);
    start.v.iter_mut().for_each(|v| *v = 0.0);

    let newton = sc.newton_options();
    let mut opts = sc.dynamic_options();
    opts.max_steps = 8000;
    opts.sample_stride = 250;
    opts.min_steps = 300;
    let t0 = std::time::Instant::now();
    match integrate_dynamic(&sc.system, &start, &pose, &opts, &newton) {
        Ok(out) => {
            println!("settled={} steps={} KE_end={:.3e} wall={:?} contacts={}",
                     out.settled, out.steps, out.final_kinetic, t0.elapsed(), out.new_contacts.len());
            let mesh = sc.system.mesh();
            for s in out.trajectory.iter() {
                let ke = sc.system.kinetic_energy(&s.state);
                let mut vmax = 0.0f64; let mut nmax = 0;
                for nn in 0..mesh.node_count() {
                    let v = (s.state.v[2*nn].powi(2) + s.state.v[2*nn+1].powi(2)).sqrt();
                    if v > vmax { vmax = v; nmax = nn; }
                }
                let w = s.state.world(mesh, nmax);
                let nc = sc.system.touching_nodes(&s.state).len();
                println!("t={:.3} KE={:.3e} contacts={} vmax={:.3} node {} at ({:.3},{:.3})",
                         s.time, ke, nc, vmax, nmax, w[0], w[1]);
            }
        }
        Err(e) => println!("dyn error: {e}"),
    }
}
