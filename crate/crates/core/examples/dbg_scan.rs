use stripfold::continuation::{OnCritical, Regime};
use stripfold::paths;
use stripfold::scenario::{PathGenerator, Scenario, ScenarioConfig};

fn main() {
    for &eta_b in &[50.0, 150.0, 400.0] {
        for &z in &[0.06, 0.09, 0.12] {
            let mut config = ScenarioConfig::default();
            config.material.eta_b = eta_b;
            config.path.generator = PathGenerator::XTranslate;
            config.path.z_meters = z;
            let sc = Scenario::build(config).unwrap();
            let t0 = std::time::Instant::now();
            let path = match paths::generate(&sc, PathGenerator::XTranslate) {
                Ok(p) => p, Err(e) => { println!("eta_b={eta_b} z={z}: path {e}"); continue; }
            };
            let initial = match paths::initial_state_for(&sc, &path) {
                Ok(s) => s,
                Err(e) => { println!("eta_b={eta_b} z={z}: LEAD-IN FAIL {e}"); continue; }
            };
            let mut tracer = sc.tracer_with_friction(false);
            tracer.options.on_critical = OnCritical::Stop;
            match tracer.trace_path(&path, &initial) {
                Ok(r) => {
                    let lc = r.first_critical_lambda();
                    let statics: Vec<&stripfold::continuation::Sample> = r.samples.iter()
                        .filter(|s| matches!(s.regime, Regime::Static)).collect();
                    let mu_tail: Vec<f64> = statics.iter().rev().take(6).map(|s| s.mu_min).collect();
                    println!("eta_b={eta_b} z={z}: critical={lc:?} mu0={:.2e} mu_tail={:?} t={:?}",
                             r.mu0, mu_tail.iter().map(|m| (m*1e3).round()/1e3).collect::<Vec<_>>(), t0.elapsed());
                }
                Err(e) => println!("eta_b={eta_b} z={z}: TRACE FAIL {e} t={:?}", t0.elapsed()),
            }
        }
    }
}
