use std::f64::consts::PI;
use stripfold::constraints::{GripperPath, Waypoint};
use stripfold::continuation::{Event, OnCritical, Regime};
use stripfold::scenario::{Scenario, ScenarioConfig};

fn arc_then_lift(l: f64, x_f: f64, z: f64, n: usize) -> GripperPath {
    let r = l - x_f;
    let mut poses: Vec<(f64, f64, f64)> = Vec::new();
    for k in 0..=n {
        let phi = PI * k as f64 / n as f64;
        poses.push((x_f + r * phi.cos() - l / 2.0, r * phi.sin(), phi));
    }
    let x_end = 2.0 * x_f - l - l / 2.0;
    for k in 1..=(n / 4) {
        poses.push((x_end, z * k as f64 / (n / 4) as f64, PI));
    }
    let mut cum = vec![0.0];
    for w in poses.windows(2) {
        let ds = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2) + (0.25 * l * (w[1].2 - w[0].2)).powi(2)).sqrt();
        cum.push(cum.last().unwrap() + ds.max(1e-12));
    }
    let t = *cum.last().unwrap();
    GripperPath::new(
        poses.iter().zip(&cum).map(|(&(x, z, th), &s)| Waypoint { lambda: s / t, x, z, theta: th }).collect(),
    ).unwrap()
}

fn main() {
    for &(eta_b, z) in &[(150.0f64, 0.12f64), (300.0, 0.12), (400.0, 0.12), (100.0, 0.10), (150.0, 0.10)] {
        let mut config = ScenarioConfig::default();
        config.material.eta_b = eta_b;
        let sc = Scenario::build(config).unwrap();
        let l = 0.3; let x_f = 0.165;
        let prep = arc_then_lift(l, x_f, z, 64);
        let mut tr = sc.tracer_with_friction(true);
        tr.options.snapshot_stride = usize::MAX;
        let rec = match tr.trace_path(&prep, &sc.rest_state()) {
            Ok(r) => r, Err(e) => { println!("eta_b={eta_b} z={z}: PREP FAIL {e}"); continue; }
        };
        let x0 = 2.0 * x_f - l;
        let x1 = ((0.97f64 * l).powi(2) - z * z).sqrt();
        let drag = GripperPath::new(vec![
            Waypoint { lambda: 0.0, x: x0 - l/2.0, z, theta: PI },
            Waypoint { lambda: 1.0, x: x1 - l/2.0, z, theta: PI },
        ]).unwrap();
        let mut tracer = sc.tracer_with_friction(false);
        tracer.options.on_critical = OnCritical::Stop;
        match tracer.trace_path(&drag, &rec.final_state) {
            Ok(r) => {
                let statics: Vec<&stripfold::continuation::Sample> = r.samples.iter()
                    .filter(|s| matches!(s.regime, Regime::Static)).collect();
                let lc = r.first_critical_lambda();
                let mu_last_ev = r.events.iter().find_map(|e| match e {
                    Event::CriticalPoint { mu_last, .. } => Some(*mu_last), _ => None });
                let n = statics.len();
                let tail: Vec<f64> = statics[n.saturating_sub(11)..].iter().map(|s| s.mu_min).collect();
                let mono = tail.windows(2).all(|w| w[1] < w[0]);
                // contact count at the last stable state
                let nc = sc.system.touching_nodes(&r.final_state).len();
                println!("eta_b={eta_b} z={z}: lc={lc:?} mu_last={mu_last_ev:?} mu0={:.3} mono_dec_last10={mono} contacts_at_crit={nc}", r.mu0);
                println!("   tail: {:?}", tail.iter().map(|m| (m*1e3).round()/1e3).collect::<Vec<_>>());
            }
            Err(e) => println!("eta_b={eta_b} z={z}: TRACE FAIL {e}"),
        }
    }
}
