//! Folding-path generation and assessment.
//!
//! Three fold paths share the same start pose (grasped edge at the hold-end
//! coordinate l, flat on the table) and target pose (edge at 2 x_f - l,
//! rotated by pi):
//!
//! - triangular: two straight segments through the apex (x_f, l - x_f),
//!   edge rotation linear in arc length. The planning assumption is an
//!   infinitely flexible strip.
//! - circular:半circle of radius l - x_f around the fold line, edge
//!   rotation equal to the arc angle. The planning assumption is a rigid
//!   panel hinged at the fold line.
//! - R: generated numerically in two phases. Phase 1 rises along the
//!   circular arc until the ground footprint shrinks to the folded
//!   footprint [hold end, x_f]; phase 2 advances greedily toward the
//!   target, choosing at each step the candidate direction (from a
//!   discretized fan) that keeps the smallest tangent eigenvalue above the
//!   stability margin and the contact boundary pinned at the fold line.
//!   Requires internal friction.
//!
//! Assessment replays a path, detects the first grasped-side ground touch,
//! and compares it against the planned touch from the folded static
//! equilibrium.

use crate::constraints::{GripperPath, GripperPose, Waypoint};
use crate::continuation::{EquilibriumRecord, Tracer};
use crate::error::{Error, Result};
use crate::fem::KinematicState;
use crate::scenario::{PathGenerator, Scenario};
use crate::solver::{smallest_eigenvalue, solve_static, EigenOptions, FrictionTerm};
use std::f64::consts::PI;

/// Densify a polyline of poses into a path with lambda proportional to
/// cumulative pose arc length (theta weighted by `theta_arm`).
fn path_from_poses(poses: &[(f64, f64, f64)], theta_arm: f64) -> Result<GripperPath> {
    let mut cum = vec![0.0f64];
    for w in poses.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ds = ((b.0 - a.0).powi(2)
            + (b.1 - a.1).powi(2)
            + (theta_arm * (b.2 - a.2)).powi(2))
        .sqrt();
        cum.push(cum.last().unwrap() + ds);
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return Err(Error::ParamDomain("degenerate pose sequence".into()));
    }
    let mut waypoints: Vec<Waypoint> = poses
        .iter()
        .zip(&cum)
        .map(|(&(x, z, theta), &s)| Waypoint {
            lambda: s / total,
            x,
            z,
            theta,
        })
        .collect();
    waypoints.first_mut().unwrap().lambda = 0.0;
    waypoints.last_mut().unwrap().lambda = 1.0;
    // Guard against repeated poses producing zero-length segments.
    waypoints.dedup_by(|b, a| b.lambda <= a.lambda);
    GripperPath::new(waypoints)
}

/// Triangular path: (l, 0) -> (x_f, l - x_f) -> (2 x_f - l, 0) in hold-end
/// coordinates, theta linear from 0 to pi in arc length, emitted in the
/// model frame.
pub fn triangular_path(l: f64, x_f: f64, n: usize) -> Result<GripperPath> {
    check_fold(l, x_f)?;
    let a = (l, 0.0);
    let b = (x_f, l - x_f);
    let c = (2.0 * x_f - l, 0.0);
    let len1 = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
    let len2 = ((c.0 - b.0).powi(2) + (c.1 - b.1).powi(2)).sqrt();
    let total = len1 + len2;
    let n = n.max(8);
    let mut poses = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let s = total * k as f64 / n as f64;
        let (x, z) = if s <= len1 {
            let t = s / len1;
            (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
        } else {
            let t = (s - len1) / len2;
            (b.0 + t * (c.0 - b.0), b.1 + t * (c.1 - b.1))
        };
        poses.push((x - l / 2.0, z, PI * s / total));
    }
    pin_shared_endpoints(&mut poses, l, x_f);
    path_from_poses(&poses, (l - x_f).max(1e-9))
}

/// Circular path: half circle of radius l - x_f centered on the fold line,
/// theta equal to the arc angle.
pub fn circular_path(l: f64, x_f: f64, n: usize) -> Result<GripperPath> {
    check_fold(l, x_f)?;
    let r = l - x_f;
    let n = n.max(8);
    let mut poses = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let phi = PI * k as f64 / n as f64;
        poses.push((x_f + r * phi.cos() - l / 2.0, r * phi.sin(), phi));
    }
    pin_shared_endpoints(&mut poses, l, x_f);
    path_from_poses(&poses, r)
}

/// All fold generators share bit-identical start and target grasp
/// positions; rounding in the per-generator arithmetic must not leak into
/// the endpoints.
fn pin_shared_endpoints(poses: &mut [(f64, f64, f64)], l: f64, x_f: f64) {
    if let Some(first) = poses.first_mut() {
        *first = (l / 2.0, 0.0, 0.0);
    }
    if let Some(last) = poses.last_mut() {
        *last = ((2.0 * x_f - l) - l / 2.0, 0.0, PI);
    }
}

fn check_fold(l: f64, x_f: f64) -> Result<()> {
    if !(x_f >= l / 2.0 && x_f < l) {
        return Err(Error::ParamDomain(format!(
            "fold line x_f = {x_f} outside [l/2, l) for l = {l}"
        )));
    }
    Ok(())
}

/// Horizontal gripper translation at fixed height and edge angle: from
/// x_start to x_end (hold-end coordinates) at height z.
pub fn x_translate_path(l: f64, z: f64, theta: f64, x_start: f64, x_end: f64) -> Result<GripperPath> {
    if x_end == x_start {
        return Err(Error::ParamDomain(
            "x-translate requires x_end != x_start".into(),
        ));
    }
    GripperPath::new(vec![
        Waypoint {
            lambda: 0.0,
            x: x_start - l / 2.0,
            z,
            theta,
        },
        Waypoint {
            lambda: 1.0,
            x: x_end - l / 2.0,
            z,
            theta,
        },
    ])
}

/// The x-continuation experiment path: a hanging fold dragged open.
///
/// The edge is held past vertical at angle pi - asin(z / (l - x_f)), the
/// angle of the circular rise whose height is z, and translated in +x at
/// fixed height; the leaning fold is pulled open until it loses static
/// stability and falls onto the ground. Start/end default to the arc pose
/// and a taut-limit stop short of full extension.
pub fn x_translate_pull_path(
    l: f64,
    x_f: f64,
    z: f64,
    x_start: Option<f64>,
    x_end: Option<f64>,
) -> Result<GripperPath> {
    check_fold(l, x_f)?;
    let r = l - x_f;
    if !(z > 0.0 && z < 0.95 * r) {
        return Err(Error::ParamDomain(format!(
            "x-translate height z = {z} must lie in (0, 0.95 (l - x_f)) = (0, {})",
            0.95 * r
        )));
    }
    let phi = PI - (z / r).asin();
    let x_start = x_start.unwrap_or(x_f + r * phi.cos());
    let x_end = x_end.unwrap_or_else(|| ((0.97 * l).powi(2) - z * z).max(0.0).sqrt());
    if x_end <= x_start {
        return Err(Error::ParamDomain(format!(
            "x-translate pull range empty: x_end {x_end} <= x_start {x_start}"
        )));
    }
    x_translate_path(l, z, phi, x_start, x_end)
}

/// Build the configured path (generators that need no simulation).
/// `PathGenerator::R` must go through [`r_path`].
pub fn generate(scenario: &Scenario, generator: PathGenerator) -> Result<GripperPath> {
    let g = &scenario.config.geometry;
    let n = scenario.config.path.waypoints;
    match generator {
        PathGenerator::Triangular => triangular_path(g.l, g.x_f, n),
        PathGenerator::Circular => circular_path(g.l, g.x_f, n),
        PathGenerator::XTranslate => {
            let p = &scenario.config.path;
            x_translate_pull_path(g.l, g.x_f, p.z_meters, p.x_start_meters, p.x_end_meters)
        }
        PathGenerator::File => {
            let file = scenario.config.path.file.as_ref().ok_or_else(|| {
                Error::Config("path.generator = \"file\" requires path.file".into())
            })?;
            GripperPath::read_file(std::path::Path::new(file))
        }
        PathGenerator::R => Err(Error::Config(
            "the R path is simulation-generated; use r_path()".into(),
        )),
    }
}

/// Initial state for tracing `path`: the rest state when the path starts at
/// the rest pose; otherwise a lead-in is traced quietly from rest with
/// internal friction: first along the circular rise up to the target edge
/// angle, then straight to the start pose. The friction keeps the
/// preparation on the followed branch through any near-critical passage
/// (the rise past vertical crosses the symmetric hanging state).
pub fn initial_state_for(scenario: &Scenario, path: &GripperPath) -> Result<KinematicState> {
    let pose0 = path.pose_at(0.0)?;
    let rest = GripperPose {
        x: scenario.length() / 2.0,
        z: 0.0,
        theta: 0.0,
    };
    let close = (pose0.x - rest.x).abs() < 1e-12
        && (pose0.z - rest.z).abs() < 1e-12
        && (pose0.theta - rest.theta).abs() < 1e-12;
    if close {
        return Ok(scenario.rest_state());
    }

    let g = &scenario.config.geometry;
    let r = g.l - g.x_f;
    let l = g.l;
    let mut poses = vec![(l / 2.0, 0.0, 0.0)];
    let theta0 = pose0.theta.clamp(0.0, PI);
    if theta0 > 1e-9 {
        let n = ((theta0 / PI * 64.0).ceil() as usize).max(8);
        for k in 1..=n {
            let phi = theta0 * k as f64 / n as f64;
            poses.push((g.x_f + r * phi.cos() - l / 2.0, r * phi.sin(), phi));
        }
    }
    poses.push((pose0.x, pose0.z, pose0.theta));
    let lead = path_from_poses(&poses, r.max(1e-9))?;

    let mut tracer = scenario.tracer_with_friction(true);
    tracer.options.snapshot_stride = usize::MAX;
    let record = tracer.trace_path(&lead, &scenario.rest_state())?;
    if !record.completed {
        return Err(Error::Planning(format!(
            "lead-in to pose ({:.4}, {:.4}, {:.4}) did not complete",
            pose0.x, pose0.z, pose0.theta
        )));
    }
    Ok(record.final_state)
}

/// Output of the R-path generator: the path plus the friction-converged
/// state at the target pose (a warm start for the folded equilibrium).
pub struct RPathResult {
    pub path: GripperPath,
    pub folded_state: KinematicState,
}

/// Generate the R path by stability-constrained greedy search. Internal
/// friction must be enabled for the scenario (the search solves with it).
pub fn r_path(scenario: &Scenario) -> Result<RPathResult> {
    let sys = &scenario.system;
    let cfg = &scenario.config.rpath;
    let l = scenario.length();
    let g = &scenario.config.geometry;
    check_fold(g.l, g.x_f)?;
    let x_f_mid = scenario.to_mid(g.x_f);
    let arm = g.l - g.x_f;
    let target = GripperPose {
        x: scenario.to_mid(2.0 * g.x_f - g.l),
        z: 0.0,
        theta: PI,
    };
    let tol_b = cfg.boundary_tol_rel * l;
    let newton = scenario.newton_options();
    let eigen = scenario.eigen_options();
    let friction = {
        let mut f = scenario.friction_settings();
        f.enabled = true;
        f
    };

    // Weighted pose metric: rotating the edge by d theta moves material by
    // about arm * d theta.
    let dist = |a: &GripperPose, b: &GripperPose| -> f64 {
        ((b.x - a.x).powi(2) + (b.z - a.z).powi(2) + (arm * (b.theta - a.theta)).powi(2)).sqrt()
    };

    let mut state = scenario.rest_state();
    let mut pose = GripperPose {
        x: l / 2.0,
        z: 0.0,
        theta: 0.0,
    };
    solve_static(sys, &mut state, &pose, &newton, None)?;
    let mu0 = {
        let (_, k) = sys.residual_and_reduced_tangent(&state, &sys.detect_active(&state))?;
        smallest_eigenvalue(&k, &eigen)?.mu_min
    };
    if mu0 <= 0.0 {
        return Err(Error::InitialUnstable { mu_min: mu0 });
    }
    let margin = cfg.eps_stab_rel * mu0;

    let mut poses = vec![(pose.x, pose.z, pose.theta)];
    let mut c_if = 0.0f64;
    let mut u_prev = state.u.clone();
    let step = cfg.step_rel * l;

    // One friction-regularized solve at a trial pose.
    let try_pose = |p: &GripperPose,
                    warm: &KinematicState,
                    c: f64,
                    u_prev: &[f64]|
     -> Option<(KinematicState, Option<f64>)> {
        let mut s = warm.clone();
        let ft = (c > 0.0).then(|| FrictionTerm {
            u_prev: u_prev.to_vec(),
            coefficient: c,
        });
        solve_static(sys, &mut s, p, &newton, ft.as_ref()).ok()?;
        let boundary = sys.contact_boundary(&s);
        Some((s, boundary))
    };
    let eig_at = |s: &KinematicState, hint: Option<f64>| -> Result<f64> {
        let (_, k) = sys.residual_and_reduced_tangent(s, &sys.detect_active(s))?;
        Ok(smallest_eigenvalue(
            &k,
            &EigenOptions {
                hint,
                ..eigen.clone()
            },
        )?
        .mu_min)
    };

    // Phase 1: rise along the circular arc until the footprint matches the
    // folded footprint [hold end, x_f].
    let mut phi = 0.0f64;
    let mut dphi = step / arm;
    let mut mu_prev = mu0;
    loop {
        let phi_next = (phi + dphi).min(0.75 * PI);
        let p = GripperPose {
            x: x_f_mid + arm * phi_next.cos(),
            z: arm * phi_next.sin(),
            theta: phi_next,
        };
        match try_pose(&p, &state, c_if, &u_prev) {
            Some((s, boundary)) => {
                let du: f64 = s
                    .u
                    .iter()
                    .zip(&u_prev)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                u_prev = s.u.clone();
                state = s;
                let r = reaction_at(scenario, &state);
                c_if = friction.target_ratio * r / du.max(1e-12 * l);
                pose = p;
                phi = phi_next;
                poses.push((pose.x, pose.z, pose.theta));
                dphi = (dphi * 1.5).min(step / arm);
                let b = boundary.unwrap_or(f64::NEG_INFINITY);
                if b <= x_f_mid + tol_b {
                    break;
                }
                if phi >= 0.75 * PI {
                    return Err(Error::GeneratorStuck {
                        x: pose.x,
                        z: pose.z,
                        theta: pose.theta,
                        reason: format!("footprint boundary {b:.4} never reached fold line"),
                    });
                }
            }
            None => {
                dphi *= 0.5;
                if dphi < 1e-4 * step / arm {
                    return Err(Error::GeneratorStuck {
                        x: pose.x,
                        z: pose.z,
                        theta: pose.theta,
                        reason: "rise phase stopped converging".into(),
                    });
                }
            }
        }
    }
    mu_prev = eig_at(&state, Some(mu_prev))?;

    // Phase 2: greedy descent toward the target pose.
    let fan: Vec<f64> = {
        let a = cfg.fan_half_angle_deg.to_radians();
        let k = cfg.fan_count.max(1);
        // Center-out ordering makes ties resolve toward the nominal
        // direction deterministically.
        let mut angles = vec![0.0];
        for i in 1..=(k / 2) {
            let frac = i as f64 / (k / 2).max(1) as f64;
            angles.push(a * frac);
            angles.push(-a * frac);
        }
        angles
    };

    let mut stepper = step;
    for iter in 0..cfg.max_steps {
        let remaining = dist(&pose, &target);
        if remaining <= stepper.max(step) {
            // Final hop to the exact target.
            match try_pose(&target, &state, c_if, &u_prev) {
                Some((s, _)) => {
                    state = s;
                    poses.push((target.x, target.z, target.theta));
                    let path = path_from_poses(&poses, arm)?;
                    return Ok(RPathResult {
                        path,
                        folded_state: state,
                    });
                }
                None => {
                    if stepper > 0.05 * step {
                        stepper *= 0.5;
                    } else {
                        return Err(Error::GeneratorStuck {
                            x: pose.x,
                            z: pose.z,
                            theta: pose.theta,
                            reason: "final approach to the target pose failed".into(),
                        });
                    }
                }
            }
            continue;
        }

        let nominal = {
            let d = [
                target.x - pose.x,
                target.z - pose.z,
                arm * (target.theta - pose.theta),
            ];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            [d[0] / n, d[1] / n, d[2] / n]
        };

        struct Candidate {
            state: KinematicState,
            pose: GripperPose,
            mu: f64,
            progress: f64,
        }
        let mut stable_best: Option<Candidate> = None;
        let mut fallback_best: Option<Candidate> = None;
        for &angle in &fan {
            let (s, c) = angle.sin_cos();
            let dir = [
                c * nominal[0] - s * nominal[1],
                s * nominal[0] + c * nominal[1],
                nominal[2],
            ];
            let trial_pose = GripperPose {
                x: pose.x + stepper * dir[0],
                z: pose.z + stepper * dir[1],
                theta: (pose.theta + stepper * dir[2] / arm).clamp(0.0, PI),
            };
            if trial_pose.z < -0.05 * l {
                continue;
            }
            let Some((s_state, boundary)) = try_pose(&trial_pose, &state, c_if, &u_prev) else {
                continue;
            };
            let Some(b) = boundary else { continue };
            if (b - x_f_mid).abs() > tol_b {
                continue;
            }
            let Ok(mu) = eig_at(&s_state, Some(mu_prev)) else {
                continue;
            };
            let progress = dir[0] * nominal[0] + dir[1] * nominal[1] + dir[2] * nominal[2];
            let cand = Candidate {
                state: s_state,
                pose: trial_pose,
                mu,
                progress,
            };
            if mu >= margin {
                let better = match &stable_best {
                    None => true,
                    Some(bst) => cand.progress > bst.progress + 1e-12,
                };
                if better {
                    stable_best = Some(cand);
                }
            } else {
                let better = match &fallback_best {
                    None => true,
                    Some(bst) => cand.mu > bst.mu,
                };
                if better {
                    fallback_best = Some(cand);
                }
            }
        }

        // Prefer a margin-satisfying direction; otherwise squeeze past the
        // pinch along the least-unstable one (the friction term keeps the
        // solves converging there).
        let chosen = stable_best.or(fallback_best);
        match chosen {
            Some(cand) => {
                let du: f64 = cand
                    .state
                    .u
                    .iter()
                    .zip(&u_prev)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                u_prev = cand.state.u.clone();
                state = cand.state;
                pose = cand.pose;
                mu_prev = cand.mu;
                let r = reaction_at(scenario, &state);
                c_if = friction.target_ratio * r / du.max(1e-12 * l);
                poses.push((pose.x, pose.z, pose.theta));
                stepper = (stepper * 1.3).min(step);
            }
            None => {
                stepper *= 0.5;
                if stepper < 0.02 * step {
                    return Err(Error::GeneratorStuck {
                        x: pose.x,
                        z: pose.z,
                        theta: pose.theta,
                        reason: format!("no feasible direction at iteration {iter}"),
                    });
                }
            }
        }
    }
    Err(Error::GeneratorStuck {
        x: pose.x,
        z: pose.z,
        theta: pose.theta,
        reason: "pose budget exhausted before reaching the target".into(),
    })
}

fn reaction_at(scenario: &Scenario, state: &KinematicState) -> f64 {
    let sys = &scenario.system;
    let active = sys.detect_active(state);
    match (sys.residual(state, &active), &sys.grasp) {
        (Ok(r), Some(g)) => {
            let gr = crate::constraints::grasp_reaction(&r, g);
            (gr[0] * gr[0] + gr[1] * gr[1]).sqrt()
        }
        _ => 0.0,
    }
}

/// The planned first-touch position: smallest world x of grasped-side
/// material in ground contact at the folded static equilibrium.
pub struct PlannedTouch {
    pub x: f64,
    pub node: usize,
    pub folded_state: KinematicState,
    pub mu_min: f64,
}

/// Compute the folded equilibrium (warm-started from `folded_hint` when
/// available, otherwise via the R-path generator) and extract the planned
/// touch. The final polish solve runs without friction, so the returned
/// state is an exact equilibrium.
pub fn planned_touch(
    scenario: &Scenario,
    folded_hint: Option<&KinematicState>,
) -> Result<PlannedTouch> {
    let g = &scenario.config.geometry;
    let target = GripperPose {
        x: scenario.to_mid(2.0 * g.x_f - g.l),
        z: 0.0,
        theta: PI,
    };
    let mut state = match folded_hint {
        Some(s) => s.clone(),
        None => r_path(scenario)?.folded_state,
    };
    let newton = scenario.newton_options();
    solve_static(&scenario.system, &mut state, &target, &newton, None)
        .map_err(|e| Error::Planning(format!("folded-state solve failed: {e}")))?;
    let (_, k) = scenario
        .system
        .residual_and_reduced_tangent(&state, &scenario.system.detect_active(&state))?;
    let mu = smallest_eigenvalue(&k, &scenario.eigen_options())?.mu_min;

    let sys = &scenario.system;
    let mut best: Option<(usize, f64)> = None;
    for (node, x) in sys.touching_nodes(&state) {
        if sys.mesh().is_grasp_side(node) {
            match best {
                Some((_, bx)) if bx <= x => {}
                _ => best = Some((node, x)),
            }
        }
    }
    let (node, x) = best.ok_or_else(|| {
        Error::Planning("folded equilibrium has no grasped-side ground contact".into())
    })?;
    Ok(PlannedTouch {
        x,
        node,
        folded_state: state,
        mu_min: mu,
    })
}

/// Outcome of replaying one folding path.
pub struct AssessmentReport {
    pub path_name: String,
    pub friction_enabled: bool,
    pub planned_touch_x: f64,
    pub achieved_touch_x: Option<f64>,
    /// achieved - planned, when both exist.
    pub touch_error: Option<f64>,
    pub critical_events: usize,
    pub completed: bool,
    pub record: EquilibriumRecord,
}

/// Replay a folding path and compare the achieved first touch against the
/// planned one.
pub fn assess_path(
    scenario: &Scenario,
    name: &str,
    path: &GripperPath,
    friction_enabled: bool,
    planned: &PlannedTouch,
) -> Result<AssessmentReport> {
    let tracer: Tracer = scenario.tracer_with_friction(friction_enabled);
    let initial = initial_state_for(scenario, path)?;
    let record = tracer.trace_path(path, &initial)?;
    let achieved = record.first_grasp_touch().map(|(_, x)| x);
    Ok(AssessmentReport {
        path_name: name.to_string(),
        friction_enabled,
        planned_touch_x: planned.x,
        achieved_touch_x: achieved,
        touch_error: achieved.map(|x| x - planned.x),
        critical_events: record.critical_events(),
        completed: record.completed,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangular_geometry() {
        let p = triangular_path(1.0, 0.5, 64).unwrap();
        let w = p.waypoints();
        // Mid-origin frame: start (0.5, 0), apex (0, 0.5), end (-0.5, 0).
        assert!((w[0].x - 0.5).abs() < 1e-15 && w[0].z == 0.0 && w[0].theta == 0.0);
        let last = w.last().unwrap();
        assert!((last.x + 0.5).abs() < 1e-15 && last.z.abs() < 1e-15);
        assert!((last.theta - PI).abs() < 1e-15);
        // Apex at lambda = len1/total = 0.5 by symmetry.
        let apex = p.pose_at(0.5).unwrap();
        assert!(apex.x.abs() < 1e-12 && (apex.z - 0.5).abs() < 1e-12);
        assert!((apex.theta - PI / 2.0).abs() < 1e-12);
        // Exactly one interior breakpoint in direction.
        let mut breaks = 0;
        for t in w.windows(3) {
            let d1 = ((t[1].x - t[0].x), (t[1].z - t[0].z));
            let d2 = ((t[2].x - t[1].x), (t[2].z - t[1].z));
            let cross = d1.0 * d2.1 - d1.1 * d2.0;
            if cross.abs() > 1e-12 {
                breaks += 1;
            }
        }
        assert_eq!(breaks, 1);
    }

    #[test]
    fn circular_geometry() {
        let p = circular_path(1.0, 0.5, 64).unwrap();
        let mid = p.pose_at(0.5).unwrap();
        assert!(mid.x.abs() < 1e-12);
        assert!((mid.z - 0.5).abs() < 1e-12);
        assert!((mid.theta - PI / 2.0).abs() < 1e-12);
        // All waypoints on the circle around the fold line (mid-origin
        // center (0, 0) for these parameters).
        for w in p.waypoints() {
            let d = (w.x.powi(2) + w.z.powi(2)).sqrt();
            assert!((d - 0.5).abs() <= 1e-12, "radius {d}");
        }
    }

    #[test]
    fn generators_share_endpoints() {
        let t = triangular_path(0.3, 0.165, 100).unwrap();
        let c = circular_path(0.3, 0.165, 100).unwrap();
        let (t0, t1) = (t.pose_at(0.0).unwrap(), t.pose_at(1.0).unwrap());
        let (c0, c1) = (c.pose_at(0.0).unwrap(), c.pose_at(1.0).unwrap());
        assert_eq!((t0.x, t0.z), (c0.x, c0.z));
        assert_eq!((t1.x, t1.z), (c1.x, c1.z));
        assert_eq!(t1.theta, c1.theta);
    }

    #[test]
    fn fold_line_range_enforced() {
        assert!(triangular_path(1.0, 0.4, 10).is_err());
        assert!(circular_path(1.0, 1.0, 10).is_err());
    }

    #[test]
    fn x_translate_shape() {
        let p = x_translate_pull_path(0.3, 0.165, 0.09, None, None).unwrap();
        let w = p.waypoints();
        assert_eq!(w.len(), 2);
        // Starts on the circular arc at height z, past vertical.
        let r: f64 = 0.135;
        let phi = PI - (0.09f64 / r).asin();
        assert!((w[0].x - (0.165 + r * phi.cos() - 0.15)).abs() < 1e-12);
        assert_eq!(w[0].z, 0.09);
        assert_eq!(w[0].theta, phi);
        assert!(w[1].x > w[0].x);
        assert_eq!(w[1].z, 0.09);
        // Height above the hanging-part reach is rejected.
        assert!(x_translate_pull_path(0.3, 0.165, 0.2, None, None).is_err());
    }
}
