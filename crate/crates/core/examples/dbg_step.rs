use std::f64::consts::PI;
use stripfold::constraints::{GripperPath, Waypoint};
use stripfold::continuation::OnCritical;
use stripfold::scenario::{Scenario, ScenarioConfig};
use stripfold::solver::{smallest_eigenvalue, solve_static};

fn main() {
    let mut config = ScenarioConfig::default();
    config.material.eta_b = 150.0;
    let sc = Scenario::build(config).unwrap();
    let l = 0.3; let x_f = 0.165; let z = 0.12;
    let r = l - x_f;
    // prep
    let mut poses: Vec<(f64,f64,f64)> = (0..=64).map(|k| {
        let phi = PI * k as f64 / 64.0;
        (x_f + r * phi.cos() - l/2.0, r * phi.sin(), phi)
    }).collect();
    let xe = 2.0*x_f - l - l/2.0;
    for k in 1..=16 { poses.push((xe, z * k as f64/16.0, PI)); }
    let mut cum = vec![0.0];
    for w in poses.windows(2) {
        let ds = ((w[1].0-w[0].0).powi(2)+(w[1].1-w[0].1).powi(2)+(0.075*(w[1].2-w[0].2)).powi(2)).sqrt();
        cum.push(cum.last().unwrap()+ds.max(1e-12));
    }
    let t = *cum.last().unwrap();
    let prep = GripperPath::new(poses.iter().zip(&cum).map(|(&(x,zz,th),&s)| Waypoint{lambda:s/t,x,z:zz,theta:th}).collect()).unwrap();
    let mut tr = sc.tracer_with_friction(true);
    tr.options.snapshot_stride = usize::MAX;
    let rec = tr.trace_path(&prep, &sc.rest_state()).unwrap();

    let x0 = 2.0*x_f - l; let x1 = ((0.97f64*l).powi(2)-z*z).sqrt();
    let drag = GripperPath::new(vec![
        Waypoint{lambda:0.0,x:x0-l/2.0,z,theta:PI},
        Waypoint{lambda:1.0,x:x1-l/2.0,z,theta:PI}]).unwrap();
    let mut tracer = sc.tracer_with_friction(false);
    tracer.options.on_critical = OnCritical::Stop;
    let record = tracer.trace_path(&drag, &rec.final_state).unwrap();
    let lc = record.first_critical_lambda().unwrap();
    let last = record.final_state.clone();
    println!("lc={lc:.6}");

    let mesh = sc.system.mesh();
    let minz = |st: &stripfold::fem::KinematicState| -> f64 {
        (0..mesh.node_count()).map(|n| st.world(mesh, n)[1]).fold(f64::INFINITY, f64::min)
    };
    println!("last stable: min_z={:.5} (ground at {:.5})", minz(&last), -sc.system.fem.material.thickness/2.0);

    // step slightly past and solve verbose
    let mut newton = sc.newton_options();
    newton.trust_radius = Some(0.0075);
    for dl in [1e-5f64, 1e-4, 1e-3] {
        let pose = drag.pose_at((lc + dl).min(1.0)).unwrap();
        let mut trial = last.clone();
        match solve_static(&sc.system, &mut trial, &pose, &newton, None) {
            Ok(rep) => {
                let du = trial.u.iter().zip(&last.u).map(|(a,b)|(a-b).abs()).fold(0.0f64,f64::max);
                let (_, k) = sc.system.residual_and_reduced_tangent(&trial, &sc.system.detect_active(&trial)).unwrap();
                let mu = smallest_eigenvalue(&k, &sc.eigen_options()).unwrap().mu_min;
                println!("dl={dl:.0e}: converged iters={} du_inf={du:.5} mu_landed={mu:.4} min_z={:.5} hist_tail={:?}",
                    rep.iterations, minz(&trial),
                    &rep.residual_history[rep.residual_history.len().saturating_sub(3)..]);
            }
            Err(e) => println!("dl={dl:.0e}: FAIL {e}"),
        }
    }
}
