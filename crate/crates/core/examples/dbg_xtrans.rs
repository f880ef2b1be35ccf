use stripfold::continuation::{Event, OnCritical, Regime};
use stripfold::paths;
use stripfold::scenario::{PathGenerator, Scenario, ScenarioConfig};

fn main() {
    let mut config = ScenarioConfig::default();
    config.material.eta_b = 150.0;
    config.path.generator = PathGenerator::XTranslate;
    config.path.z_meters = 0.09;
    let sc = Scenario::build(config).unwrap();

    let path = paths::generate(&sc, PathGenerator::XTranslate).unwrap();
    let t0 = std::time::Instant::now();
    let initial = paths::initial_state_for(&sc, &path).unwrap();
    println!("lead-in: {:?}", t0.elapsed());

    let mut tracer = sc.tracer_with_friction(false);
    tracer.options.on_critical = OnCritical::DynamicHandoff;
    let t1 = std::time::Instant::now();
    match tracer.trace_path(&path, &initial) {
        Ok(record) => {
            println!("trace: {:?} completed={} samples={}", t1.elapsed(), record.completed, record.samples.len());
            for e in &record.events {
                match e {
                    Event::CriticalPoint { lambda_c, last_stable_lambda, mu_last } =>
                        println!("  critical lambda_c={lambda_c:.6} last_ok={last_stable_lambda:.6} mu_last={mu_last:.4e} (mu0={:.3e})", record.mu0),
                    Event::DynamicSegment { lambda } => println!("  dynamic at {lambda:.5}"),
                    Event::GroundTouch { node, world_x, .. } =>
                        println!("  ground_touch node={node} x={world_x:.4}"),
                    Event::GraspSideTouch { node, world_x, regime, .. } =>
                        println!("  grasp_side_touch node={node} x={world_x:.4} regime={regime:?}"),
                    Event::DynamicSettled { steps, polished, .. } =>
                        println!("  settled steps={steps} polished={polished}"),
                }
            }
            let statics: Vec<(f64, f64)> = record.samples.iter()
                .filter(|s| matches!(s.regime, Regime::Static))
                .map(|s| (s.lambda, s.mu_min)).collect();
            // find the critical event lambda, take 12 static samples before it
            if let Some(lc) = record.first_critical_lambda() {
                let pre: Vec<&(f64, f64)> = statics.iter().filter(|(l, _)| *l < lc).collect();
                let tail = &pre[pre.len().saturating_sub(12)..];
                println!("pre-critical mu tail:");
                for (l, m) in tail { println!("   l={l:.4} mu={m:.4}"); }
                let mono = tail.windows(2).all(|w| w[1].1 < w[0].1);
                println!("monotone decreasing over last 10: {}",
                    tail.len() >= 10 && tail[tail.len()-10..].windows(2).all(|w| w[1].1 < w[0].1));
                let _ = mono;
            }
            // post-snap mu
            for s in record.samples.iter().filter(|s| matches!(s.regime, Regime::Static)) {
                if record.first_critical_lambda().map_or(false, |lc| s.lambda >= lc) {
                    println!("first post-snap static: l={:.4} mu={:.4e}", s.lambda, s.mu_min);
                    break;
                }
            }
        }
        Err(e) => println!("TRACE FAILED: {e}"),
    }
}
