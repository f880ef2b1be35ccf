//! Equilibrium-path tracing under a varying control parameter.
//!
//! The tracer steps lambda along a gripper path, warm-starting each static
//! solve from the previous state and monitoring the smallest eigenvalue of
//! the reduced tangent. Loss of stability is flagged either by the
//! eigenvalue dropping below a threshold or by Newton failure after step
//! halving; the critical parameter is then bracketed by bisection. Without
//! internal friction the tracer hands the frozen-pose system to the dynamic
//! integrator and resumes statically from the settled state; with internal
//! friction a small force pulling the state toward the previous step
//! regularizes the continuation and the path is followed statically
//! throughout.

use crate::constraints::GripperPath;
use crate::error::{Error, Result};
use crate::fem::KinematicState;
use crate::solver::{
    integrate_dynamic, smallest_eigenvalue, solve_static, DynamicOptions, EigenOptions,
    FrictionTerm, NewtonOptions,
};
use crate::system::StripSystem;

/// One-parameter family of static problems; the generic face of the
/// critical-point localizer, so it can be exercised on closed-form toys.
pub trait ContinuationProblem {
    type State: Clone;
    /// Attempt a static solve at `lambda` warm-started from `warm` (the
    /// converged state at `warm_lambda`); on success return the state and a
    /// stability indicator (smallest eigenvalue of the tangent). A solve
    /// that lands on a different equilibrium branch (a jump) counts as a
    /// failure.
    fn solve_at(
        &mut self,
        lambda: f64,
        warm: &Self::State,
        warm_lambda: f64,
    ) -> Option<(Self::State, f64)>;
}

#[derive(Debug, Clone)]
pub struct CriticalPoint<S> {
    /// Bracket midpoint.
    pub lambda_c: f64,
    pub last_stable_lambda: f64,
    pub last_stable_state: S,
    pub last_stable_mu: f64,
}

/// Bisection localization of a critical parameter inside [lambda_ok,
/// lambda_fail]. "Stable" means the solve converges with indicator above
/// `mu_floor`. Errors if the bracket does not actually straddle the
/// stability boundary.
pub fn locate_critical_point<P: ContinuationProblem>(
    problem: &mut P,
    bracket: (f64, f64),
    warm: &P::State,
    mu_floor: f64,
    tol: f64,
) -> Result<CriticalPoint<P::State>> {
    let (mut lo, mut hi) = bracket;
    if !(hi > lo) {
        return Err(Error::Bracketing(format!("empty bracket [{lo}, {hi}]")));
    }
    let stable = |out: &Option<(P::State, f64)>| matches!(out, Some((_, mu)) if *mu > mu_floor);

    let lo_out = problem.solve_at(lo, warm, lo);
    if !stable(&lo_out) {
        return Err(Error::Bracketing(format!(
            "lower end lambda = {lo} is not a stable solution"
        )));
    }
    let (mut lo_state, mut lo_mu) = lo_out.unwrap();
    let hi_out = problem.solve_at(hi, &lo_state, lo);
    if stable(&hi_out) {
        return Err(Error::Bracketing(format!(
            "both bracket ends converge stably (lambda = {lo}, {hi})"
        )));
    }

    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let out = problem.solve_at(mid, &lo_state, lo);
        if stable(&out) {
            let (s, mu) = out.unwrap();
            lo_state = s;
            lo_mu = mu;
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalPoint {
        lambda_c: 0.5 * (lo + hi),
        last_stable_lambda: lo,
        last_stable_state: lo_state,
        last_stable_mu: lo_mu,
    })
}

/// Internal-friction regularization settings (static continuation only).
#[derive(Debug, Clone)]
pub struct FrictionSettings {
    pub enabled: bool,
    /// Target |f_if| / |gripper reaction| per step.
    pub target_ratio: f64,
    /// Hard bound on |f_if| / |gripper reaction|.
    pub cap_ratio: f64,
}

impl Default for FrictionSettings {
    fn default() -> Self {
        Self {
            enabled: false,
            target_ratio: 1e-3,
            cap_ratio: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnCritical {
    /// Stop the trace at the located critical point (sweep mode).
    Stop,
    /// Trace the snap dynamically at frozen lambda_c and resume statically.
    DynamicHandoff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeflectionMetric {
    /// Displacement norm of the mid-surface material midpoint.
    #[default]
    MidpointNorm,
    /// Largest nodal displacement norm.
    MaxNodal,
}

#[derive(Debug, Clone)]
pub struct ContinuationOptions {
    /// Base lambda step.
    pub d_lambda: f64,
    /// Smallest lambda step before a failure is classified.
    pub d_lambda_min: f64,
    /// Step recovery factor after successful steps (capped at the base).
    pub growth: f64,
    /// Critical detector threshold relative to mu_min at lambda_0.
    pub eps_stab_rel: f64,
    /// Newton-failure classification threshold relative to mu_min(lambda_0):
    /// failures with the last stable mu above this are plain numerical
    /// failures, not critical points.
    pub classify_rel: f64,
    /// Bracket tolerance in lambda units: tol = locate_tol_length / path
    /// arc length (clamped to [1e-9, 0.1]).
    pub locate_tol_length: f64,
    pub on_critical: OnCritical,
    pub max_steps: usize,
    /// Record a full state snapshot every this many accepted static samples.
    pub snapshot_stride: usize,
    /// Mode kick applied at the start of a dynamic segment, relative to l.
    pub kick_amplitude_rel: f64,
    pub deflection_metric: DeflectionMetric,
    /// Branch-jump detector: a converged step is a jump (the warm start
    /// landed on another branch) when the largest nodal move exceeds
    /// jump_abs_rel * l + jump_rel_factor * (gripper pose travel).
    pub jump_abs_rel: f64,
    pub jump_rel_factor: f64,
}

impl ContinuationOptions {
    pub fn for_length(length: f64) -> Self {
        Self {
            d_lambda: 5e-3,
            d_lambda_min: 1e-5,
            growth: 1.5,
            eps_stab_rel: 1e-6,
            classify_rel: 1e-3,
            locate_tol_length: 1e-3 * length,
            on_critical: OnCritical::DynamicHandoff,
            max_steps: 20_000,
            snapshot_stride: 10,
            kick_amplitude_rel: 1e-3,
            deflection_metric: DeflectionMetric::MidpointNorm,
            jump_abs_rel: 0.05,
            jump_rel_factor: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub lambda: f64,
    /// Smallest eigenvalue of the reduced tangent; NaN on dynamic samples.
    pub mu_min: f64,
    /// Gripper reaction force (x, z).
    pub reaction: [f64; 2],
    pub deflection: f64,
    pub regime: Regime,
    /// Applied internal-friction force norm (static, friction runs only).
    pub friction_force: f64,
    /// Time within the dynamic segment; zero on static samples.
    pub time: f64,
}

#[derive(Debug, Clone)]
pub enum Event {
    CriticalPoint {
        lambda_c: f64,
        last_stable_lambda: f64,
        mu_last: f64,
    },
    DynamicSegment {
        lambda: f64,
    },
    GroundTouch {
        lambda: f64,
        node: usize,
        world_x: f64,
    },
    GraspSideTouch {
        lambda: f64,
        node: usize,
        world_x: f64,
        regime: Regime,
    },
    DynamicSettled {
        lambda: f64,
        steps: usize,
        polished: bool,
    },
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub lambda: f64,
    pub regime: Regime,
    pub time: f64,
    pub state: KinematicState,
}

#[derive(Debug)]
pub struct EquilibriumRecord {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: KinematicState,
    /// Reached lambda = 1 (a Stop-mode trace ends at the critical point).
    pub completed: bool,
    pub mu0: f64,
    /// First static state after each dynamic segment.
    pub resume_states: Vec<KinematicState>,
}

impl EquilibriumRecord {
    pub fn critical_events(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::CriticalPoint { .. }))
            .count()
    }

    pub fn first_critical_lambda(&self) -> Option<f64> {
        self.events.iter().find_map(|e| match e {
            Event::CriticalPoint { lambda_c, .. } => Some(*lambda_c),
            _ => None,
        })
    }

    /// World x of the first grasped-side node to enter ground contact.
    pub fn first_grasp_touch(&self) -> Option<(f64, f64)> {
        self.events.iter().find_map(|e| match e {
            Event::GraspSideTouch {
                lambda, world_x, ..
            } => Some((*lambda, *world_x)),
            _ => None,
        })
    }
}

enum CriticalOutcome {
    /// The suspicion did not survive dynamic confirmation; the trace
    /// resumes at lambda_dyn with the re-converged state.
    Benign { lambda_dyn: f64 },
    Critical { lambda_c: f64, lambda_resume: f64 },
}

/// Everything a trace needs besides the path itself.
pub struct Tracer<'a> {
    pub system: &'a StripSystem,
    pub newton: NewtonOptions,
    pub eigen: EigenOptions,
    pub dynamic: DynamicOptions,
    pub options: ContinuationOptions,
    pub friction: FrictionSettings,
}

struct TouchTracker {
    touching: Vec<bool>,
    grasp_touch_seen: bool,
}

impl TouchTracker {
    fn new(system: &StripSystem, state: &KinematicState) -> Self {
        let mut touching = vec![false; system.mesh().node_count()];
        for (n, _) in system.touching_nodes(state) {
            touching[n] = true;
        }
        Self {
            touching,
            grasp_touch_seen: false,
        }
    }

    /// Diff the touching set against the tracked one; returns (node, x) that
    /// newly entered contact, in deepest-first deterministic order.
    fn update(&mut self, system: &StripSystem, state: &KinematicState) -> Vec<(usize, f64)> {
        let now = system.touching_nodes(state);
        let mut entered = Vec::new();
        let mut seen = vec![false; self.touching.len()];
        for &(n, x) in &now {
            seen[n] = true;
            if !self.touching[n] {
                entered.push((n, x));
                self.touching[n] = true;
            }
        }
        for (n, s) in seen.iter().enumerate() {
            if !s {
                self.touching[n] = false;
            }
        }
        entered
    }
}

impl<'a> Tracer<'a> {
    fn deflection(&self, state: &KinematicState) -> f64 {
        match self.options.deflection_metric {
            DeflectionMetric::MidpointNorm => {
                let n = self.system.mesh().midpoint_node;
                (state.u[2 * n].powi(2) + state.u[2 * n + 1].powi(2)).sqrt()
            }
            DeflectionMetric::MaxNodal => (0..self.system.mesh().node_count())
                .map(|n| (state.u[2 * n].powi(2) + state.u[2 * n + 1].powi(2)).sqrt())
                .fold(0.0, f64::max),
        }
    }

    /// Gripper pose travel between two path parameters, with rotation
    /// weighted by a quarter strip length.
    fn pose_travel(&self, path: &GripperPath, a: f64, b: f64) -> f64 {
        match (path.pose_at(a), path.pose_at(b)) {
            (Ok(pa), Ok(pb)) => {
                let w = 0.25 * self.system.mesh().geometry.length;
                ((pb.x - pa.x).powi(2) + (pb.z - pa.z).powi(2) + (w * (pb.theta - pa.theta)).powi(2))
                    .sqrt()
            }
            _ => 0.0,
        }
    }

    fn is_jump(&self, du_inf: f64, pose_travel: f64) -> bool {
        let l = self.system.mesh().geometry.length;
        du_inf > self.options.jump_abs_rel * l + self.options.jump_rel_factor * pose_travel
    }

    fn locate_tol(&self, path: &GripperPath) -> f64 {
        let scale = path.arc_length().max(1e-12);
        (self.options.locate_tol_length / scale).clamp(1e-9, 0.1)
    }

    /// Physical gripper reaction at a state (friction excluded).
    fn reaction(&self, state: &KinematicState) -> [f64; 2] {
        let active = self.system.detect_active(state);
        match (self.system.residual(state, &active), &self.system.grasp) {
            (Ok(r), Some(g)) => crate::constraints::grasp_reaction(&r, g),
            _ => [f64::NAN, f64::NAN],
        }
    }

    /// Newton options with the branch-following trust region applied.
    fn branch_newton(&self) -> NewtonOptions {
        let mut n = self.newton.clone();
        let cap = 0.5 * self.options.jump_abs_rel * self.system.mesh().geometry.length;
        n.trust_radius = Some(n.trust_radius.map_or(cap, |r| r.min(cap)));
        n
    }

    /// Trace the equilibrium path of `path` starting from `initial`.
    pub fn trace_path(
        &self,
        path: &GripperPath,
        initial: &KinematicState,
    ) -> Result<EquilibriumRecord> {
        let sysr = self.system;
        let newton = self.branch_newton();
        let mut state = initial.clone();
        let pose0 = path.pose_at(0.0)?;
        solve_static(sysr, &mut state, &pose0, &newton, None)?;
        let (_, k0) = sysr.residual_and_reduced_tangent(&state, &sysr.detect_active(&state))?;
        let eig0 = smallest_eigenvalue(&k0, &self.eigen)?;
        if eig0.mu_min <= 0.0 {
            return Err(Error::InitialUnstable {
                mu_min: eig0.mu_min,
            });
        }
        let mu0 = eig0.mu_min;
        let eps_detect = self.options.eps_stab_rel * mu0;

        let mut record = EquilibriumRecord {
            samples: Vec::new(),
            events: Vec::new(),
            snapshots: Vec::new(),
            final_state: state.clone(),
            completed: false,
            mu0,
            resume_states: Vec::new(),
        };
        let mut touch = TouchTracker::new(sysr, &state);
        let report0 = self.reaction(&state);
        record.samples.push(Sample {
            lambda: 0.0,
            mu_min: mu0,
            reaction: report0,
            deflection: self.deflection(&state),
            regime: Regime::Static,
            friction_force: 0.0,
            time: 0.0,
        });
        record.snapshots.push(Snapshot {
            lambda: 0.0,
            regime: Regime::Static,
            time: 0.0,
            state: state.clone(),
        });

        let mut lambda = 0.0f64;
        let mut d_lambda = self.options.d_lambda;
        let mut mu_last = mu0;
        let mut c_if = 0.0f64; // set after the first accepted step
        let mut static_samples_since_snapshot = 0usize;

        // Degenerate zero-length path: a single sample, no events.
        let w = path.waypoints();
        if w.iter()
            .all(|p| p.x == w[0].x && p.z == w[0].z && p.theta == w[0].theta)
        {
            record.completed = true;
            record.final_state = state;
            return Ok(record);
        }

        let mut steps = 0usize;
        let mut benign_confirmations = 0usize;
        while lambda < 1.0 {
            steps += 1;
            if steps > self.options.max_steps {
                return Err(Error::NonConvergence {
                    residual: f64::NAN,
                    tolerance: self.newton.tolerance,
                    iterations: self.options.max_steps,
                });
            }
            let lambda_try = (lambda + d_lambda).min(1.0);
            let pose = path.pose_at(lambda_try)?;
            let friction_term = (self.friction.enabled && c_if > 0.0).then(|| FrictionTerm {
                u_prev: state.u.clone(),
                coefficient: c_if,
            });

            let mut trial = state.clone();
            let attempt = solve_static(sysr, &mut trial, &pose, &newton, friction_term.as_ref());
            match attempt {
                Ok(mut report) => {
                    // Friction cap: shrink c until |f_if| <= cap |R_grip|.
                    if self.friction.enabled && report.friction_force_norm > 0.0 {
                        let mut shrinks = 0;
                        while report.friction_force_norm
                            > self.friction.cap_ratio * reaction_norm(&report.reaction_grasp)
                            && shrinks < 12
                        {
                            c_if *= 0.25;
                            shrinks += 1;
                            trial = state.clone();
                            let ft = (c_if > 0.0).then(|| FrictionTerm {
                                u_prev: state.u.clone(),
                                coefficient: c_if,
                            });
                            report = solve_static(sysr, &mut trial, &pose, &newton, ft.as_ref())?;
                            if ft.is_none() {
                                break;
                            }
                        }
                    }

                    // A converged solve that traveled much farther than the
                    // gripper did has hopped to another branch: the warm
                    // start lost the equilibrium it was following, which is
                    // the snap-through symptom when the eigen monitor is
                    // sampled too coarsely to see mu reach zero.
                    let du_inf = trial
                        .u
                        .iter()
                        .zip(&state.u)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max);
                    if !self.friction.enabled
                        && self.is_jump(du_inf, self.pose_travel(path, lambda, lambda_try))
                    {
                        // The warm start left its branch. With a coexisting
                        // attractor nearby Newton can defect long before the
                        // followed branch actually dies, so first retry with
                        // smaller steps; only a jump that persists at the
                        // minimum step is a critical bracket.
                        if d_lambda > self.options.d_lambda_min {
                            d_lambda = (d_lambda * 0.5).max(self.options.d_lambda_min);
                            continue;
                        }
                        match self.handle_critical(
                            path,
                            &mut record,
                            &mut state,
                            &mut touch,
                            lambda,
                            lambda_try,
                            mu0,
                        ) {
                            Ok(CriticalOutcome::Benign { lambda_dyn }) => {
                                benign_confirmations += 1;
                                if benign_confirmations > 64 {
                                    return Err(Error::NonConvergence {
                                        residual: f64::NAN,
                                        tolerance: self.newton.tolerance,
                                        iterations: benign_confirmations,
                                    });
                                }
                                lambda = lambda_dyn;
                                mu_last = self.record_static_sample(
                                    &mut record, &state, &mut touch, lambda, mu_last, 0.0,
                                )?;
                                d_lambda = self.options.d_lambda;
                                continue;
                            }
                            Ok(CriticalOutcome::Critical { lambda_resume, .. }) => {
                                lambda = lambda_resume;
                                if self.options.on_critical == OnCritical::Stop {
                                    record.final_state = state.clone();
                                    return Ok(record);
                                }
                                mu_last =
                                    record.samples.last().map(|s| s.mu_min).unwrap_or(mu0);
                                d_lambda = self.options.d_lambda;
                                continue;
                            }
                            // The motion refines into a fast-but-continuous
                            // evolution: not a critical point, accept it.
                            Err(Error::Bracketing(_)) => {}
                            Err(e) => return Err(e),
                        }
                    }

                    let (_, k_red) =
                        sysr.residual_and_reduced_tangent(&trial, &sysr.detect_active(&trial))?;
                    let eig = smallest_eigenvalue(
                        &k_red,
                        &EigenOptions {
                            hint: Some(mu_last),
                            ..self.eigen.clone()
                        },
                    )?;

                    if !self.friction.enabled && eig.mu_min <= eps_detect {
                        // Converged but unstable: treat as the failing end.
                        let lambda_c = self.handle_critical(
                            path,
                            &mut record,
                            &mut state,
                            &mut touch,
                            lambda,
                            lambda_try,
                            mu0,
                        )?;
                        lambda = lambda_c;
                        if self.options.on_critical == OnCritical::Stop {
                            record.final_state = state.clone();
                            return Ok(record);
                        }
                        mu_last = record.samples.last().map(|s| s.mu_min).unwrap_or(mu0);
                        d_lambda = self.options.d_lambda;
                        continue;
                    }

                    // Accept the step.
                    let step_norm: f64 = trial
                        .u
                        .iter()
                        .zip(&state.u)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    state = trial;
                    lambda = lambda_try;
                    mu_last = eig.mu_min;
                    record.samples.push(Sample {
                        lambda,
                        mu_min: eig.mu_min,
                        reaction: report.reaction_grasp,
                        deflection: self.deflection(&state),
                        regime: Regime::Static,
                        friction_force: report.friction_force_norm,
                        time: 0.0,
                    });
                    for (node, world_x) in touch.update(sysr, &state) {
                        if sysr.mesh().is_grasp_side(node) && !touch.grasp_touch_seen {
                            touch.grasp_touch_seen = true;
                            record.events.push(Event::GraspSideTouch {
                                lambda,
                                node,
                                world_x,
                                regime: Regime::Static,
                            });
                        }
                    }
                    static_samples_since_snapshot += 1;
                    if static_samples_since_snapshot >= self.options.snapshot_stride
                        || lambda >= 1.0
                    {
                        static_samples_since_snapshot = 0;
                        record.snapshots.push(Snapshot {
                            lambda,
                            regime: Regime::Static,
                            time: 0.0,
                            state: state.clone(),
                        });
                    }
                    if self.friction.enabled {
                        // Rescale c toward the target force ratio.
                        let r = reaction_norm(&report.reaction_grasp);
                        let denom = step_norm.max(1e-12 * sysr.mesh().geometry.length);
                        let target = self.friction.target_ratio * r / denom;
                        c_if = if c_if > 0.0 {
                            (c_if * 0.5 + target * 0.5).min(target * 4.0)
                        } else {
                            target
                        };
                    }
                    d_lambda = (d_lambda * self.options.growth).min(self.options.d_lambda);
                }
                Err(Error::NonConvergence { .. }) => {
                    if d_lambda > self.options.d_lambda_min {
                        d_lambda = (d_lambda * 0.5).max(self.options.d_lambda_min);
                        continue;
                    }
                    if self.friction.enabled {
                        // Friction-regularized trace is expected to pass
                        // critical regions; a hard failure here is final.
                        return Err(Error::NonConvergence {
                            residual: f64::NAN,
                            tolerance: self.newton.tolerance,
                            iterations: 0,
                        });
                    }
                    // Classify: only a soft tangent signals a critical point.
                    if mu_last < self.options.classify_rel * mu0 {
                        match self.handle_critical(
                            path,
                            &mut record,
                            &mut state,
                            &mut touch,
                            lambda,
                            lambda_try,
                            mu0,
                        )? {
                            CriticalOutcome::Benign { lambda_dyn } => {
                                benign_confirmations += 1;
                                lambda = lambda_dyn;
                                mu_last = self.record_static_sample(
                                    &mut record, &state, &mut touch, lambda, mu_last, 0.0,
                                )?;
                            }
                            CriticalOutcome::Critical { lambda_resume, .. } => {
                                lambda = lambda_resume;
                                if self.options.on_critical == OnCritical::Stop {
                                    record.final_state = state.clone();
                                    return Ok(record);
                                }
                                mu_last =
                                    record.samples.last().map(|s| s.mu_min).unwrap_or(mu0);
                            }
                        }
                        d_lambda = self.options.d_lambda;
                        continue;
                    }
                    return Err(Error::NonConvergence {
                        residual: f64::NAN,
                        tolerance: self.newton.tolerance,
                        iterations: 0,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        record.completed = true;
        record.final_state = state;
        Ok(record)
    }

    /// Record a static sample (eigen, reaction, deflection, touch events)
    /// at the current state; returns the eigenvalue for the hint chain.
    fn record_static_sample(
        &self,
        record: &mut EquilibriumRecord,
        state: &KinematicState,
        touch: &mut TouchTracker,
        lambda: f64,
        mu_hint: f64,
        friction_force: f64,
    ) -> Result<f64> {
        let (_, k_red) = self
            .system
            .residual_and_reduced_tangent(state, &self.system.detect_active(state))?;
        let eig = smallest_eigenvalue(
            &k_red,
            &EigenOptions {
                hint: Some(mu_hint),
                ..self.eigen.clone()
            },
        )?;
        record.samples.push(Sample {
            lambda,
            mu_min: eig.mu_min,
            reaction: self.reaction(state),
            deflection: self.deflection(state),
            regime: Regime::Static,
            friction_force,
            time: 0.0,
        });
        for (node, world_x) in touch.update(self.system, state) {
            if self.system.mesh().is_grasp_side(node) && !touch.grasp_touch_seen {
                touch.grasp_touch_seen = true;
                record.events.push(Event::GraspSideTouch {
                    lambda,
                    node,
                    world_x,
                    regime: Regime::Static,
                });
            }
        }
        Ok(eig.mu_min)
    }

    /// Locate the suspected critical point in [lambda_ok, lambda_fail],
    /// then confirm it physically: the strip is kicked along the soft mode
    /// and integrated dynamically at a frozen pose just past the bracket.
    /// If it settles back onto the static branch the suspicion was a
    /// warm-start artifact (coexisting equilibria make Newton defect) and
    /// the trace continues silently; a genuine instability records the
    /// critical point, the dynamic segment, and the touchdown events.
    #[allow(clippy::too_many_arguments)]
    fn handle_critical(
        &self,
        path: &GripperPath,
        record: &mut EquilibriumRecord,
        state: &mut KinematicState,
        touch: &mut TouchTracker,
        lambda_ok: f64,
        lambda_fail: f64,
        mu0: f64,
    ) -> Result<CriticalOutcome> {
        let eps_detect = self.options.eps_stab_rel * mu0;
        let tol = self.locate_tol(path);
        let mut problem = ScenarioProblem {
            tracer: self,
            path,
        };
        let critical = locate_critical_point(
            &mut problem,
            (lambda_ok, lambda_fail),
            state,
            eps_detect,
            tol,
        )?;
        *state = critical.last_stable_state.clone();

        // Eigen mode at the last stable state, for the start kick.
        let (_, k_red) = self
            .system
            .residual_and_reduced_tangent(state, &self.system.detect_active(state))?;
        let eig = smallest_eigenvalue(&k_red, &self.eigen)?;

        // Freeze the pose just past the bracket: at the midpoint the
        // followed equilibrium may still exist and the dynamics would relax
        // straight back onto it.
        let lambda_dyn = (critical.lambda_c + tol).min(1.0);
        let pose_c = path.pose_at(lambda_dyn)?;
        let mut dyn_start = state.clone();
        let kick = self.options.kick_amplitude_rel * self.system.mesh().geometry.length;
        self.system
            .dofmap
            .scatter_add(&eig.mode, kick, &mut dyn_start.u);
        dyn_start.v.iter_mut().for_each(|v| *v = 0.0);

        let dyn_opts = DynamicOptions {
            min_steps: self.dynamic.min_steps.max(300),
            ..self.dynamic.clone()
        };
        let outcome = integrate_dynamic(self.system, &dyn_start, &pose_c, &dyn_opts, &self.newton)?;

        // Physical confirmation: how far did the strip actually move?
        let moved = outcome
            .settled_state
            .u
            .iter()
            .zip(&state.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let benign = outcome.settled && moved <= 10.0 * kick;
        if benign {
            // Not an instability: re-converge statically just past the
            // bracket and continue the trace without events.
            let mut resolved = outcome.settled_state;
            resolved.v.iter_mut().for_each(|v| *v = 0.0);
            solve_static(self.system, &mut resolved, &pose_c, &self.branch_newton(), None)?;
            *state = resolved;
            return Ok(CriticalOutcome::Benign { lambda_dyn });
        }

        record.events.push(Event::CriticalPoint {
            lambda_c: critical.lambda_c,
            last_stable_lambda: critical.last_stable_lambda,
            mu_last: critical.last_stable_mu,
        });
        record.snapshots.push(Snapshot {
            lambda: critical.last_stable_lambda,
            regime: Regime::Static,
            time: 0.0,
            state: critical.last_stable_state.clone(),
        });

        if self.options.on_critical == OnCritical::Stop {
            *state = critical.last_stable_state.clone();
            return Ok(CriticalOutcome::Critical {
                lambda_c: critical.lambda_c,
                lambda_resume: lambda_dyn,
            });
        }

        record.events.push(Event::DynamicSegment {
            lambda: critical.lambda_c,
        });
        // Dynamic samples and touch events.
        let mut ground_touch_logged = false;
        for c in &outcome.new_contacts {
            if !ground_touch_logged {
                ground_touch_logged = true;
                record.events.push(Event::GroundTouch {
                    lambda: critical.lambda_c,
                    node: c.node,
                    world_x: c.world_x,
                });
            }
            if self.system.mesh().is_grasp_side(c.node) && !touch.grasp_touch_seen {
                touch.grasp_touch_seen = true;
                record.events.push(Event::GraspSideTouch {
                    lambda: critical.lambda_c,
                    node: c.node,
                    world_x: c.world_x,
                    regime: Regime::Dynamic,
                });
            }
            touch.touching[c.node] = true;
        }
        for s in &outcome.trajectory {
            record.samples.push(Sample {
                lambda: critical.lambda_c,
                mu_min: f64::NAN,
                reaction: {
                    let active = self.system.detect_active(&s.state);
                    match (&self.system.grasp, self.system.residual(&s.state, &active)) {
                        (Some(g), Ok(r)) => crate::constraints::grasp_reaction(&r, g),
                        _ => [f64::NAN, f64::NAN],
                    }
                },
                deflection: self.deflection(&s.state),
                regime: Regime::Dynamic,
                friction_force: 0.0,
                time: s.time,
            });
            record.snapshots.push(Snapshot {
                lambda: critical.lambda_c,
                regime: Regime::Dynamic,
                time: s.time,
                state: s.state.clone(),
            });
        }
        record.events.push(Event::DynamicSettled {
            lambda: critical.lambda_c,
            steps: outcome.steps,
            polished: outcome.handoff_polished,
        });
        if !outcome.settled {
            return Err(Error::SettleTimeout {
                steps: outcome.steps,
                kinetic: outcome.final_kinetic,
            });
        }

        // Static resume at the frozen critical pose.
        *state = outcome.settled_state;
        state.v.iter_mut().for_each(|v| *v = 0.0);
        let report = solve_static(self.system, state, &pose_c, &self.newton, None)?;
        let (_, k_red) = self
            .system
            .residual_and_reduced_tangent(state, &self.system.detect_active(state))?;
        let eig = smallest_eigenvalue(&k_red, &self.eigen)?;
        record.samples.push(Sample {
            lambda: critical.lambda_c,
            mu_min: eig.mu_min,
            reaction: report.reaction_grasp,
            deflection: self.deflection(state),
            regime: Regime::Static,
            friction_force: 0.0,
            time: 0.0,
        });
        record.snapshots.push(Snapshot {
            lambda: critical.lambda_c,
            regime: Regime::Static,
            time: 0.0,
            state: state.clone(),
        });
        record.resume_states.push(state.clone());
        for (node, world_x) in touch.update(self.system, state) {
            if self.system.mesh().is_grasp_side(node) && !touch.grasp_touch_seen {
                touch.grasp_touch_seen = true;
                record.events.push(Event::GraspSideTouch {
                    lambda: critical.lambda_c,
                    node,
                    world_x,
                    regime: Regime::Static,
                });
            }
        }
        Ok(CriticalOutcome::Critical {
            lambda_c: critical.lambda_c,
            lambda_resume: lambda_dyn,
        })
    }

    /// Run the dynamic solver from a critical state kicked along +mode and
    /// -mode; for a bifurcation the settled states differ materially, for a
    /// pure limit point they coincide.
    pub fn perturb_and_branch(
        &self,
        state_at_critical: &KinematicState,
        pose_lambda_c: &crate::constraints::GripperPose,
        mode: &[f64],
        amplitude: f64,
    ) -> Result<(KinematicState, KinematicState)> {
        let run = |sign: f64| -> Result<KinematicState> {
            let mut start = state_at_critical.clone();
            self.system
                .dofmap
                .scatter_add(mode, sign * amplitude, &mut start.u);
            start.v.iter_mut().for_each(|v| *v = 0.0);
            let dyn_opts = DynamicOptions {
                min_steps: self.dynamic.min_steps.max(300),
                ..self.dynamic.clone()
            };
            let outcome =
                integrate_dynamic(self.system, &start, pose_lambda_c, &dyn_opts, &self.newton)?;
            if !outcome.settled {
                return Err(Error::SettleTimeout {
                    steps: outcome.steps,
                    kinetic: outcome.final_kinetic,
                });
            }
            let mut settled = outcome.settled_state;
            settled.v.iter_mut().for_each(|v| *v = 0.0);
            solve_static(self.system, &mut settled, pose_lambda_c, &self.newton, None)?;
            Ok(settled)
        };
        Ok((run(1.0)?, run(-1.0)?))
    }
}

fn reaction_norm(r: &[f64; 2]) -> f64 {
    (r[0] * r[0] + r[1] * r[1]).sqrt()
}

/// FEM-side continuation problem over a gripper path (friction off: the
/// localizer works on the physical system).
struct ScenarioProblem<'a, 'b> {
    tracer: &'b Tracer<'a>,
    path: &'b GripperPath,
}

impl ContinuationProblem for ScenarioProblem<'_, '_> {
    type State = KinematicState;

    fn solve_at(
        &mut self,
        lambda: f64,
        warm: &KinematicState,
        warm_lambda: f64,
    ) -> Option<(KinematicState, f64)> {
        let pose = self.path.pose_at(lambda).ok()?;
        let mut state = warm.clone();
        solve_static(
            self.tracer.system,
            &mut state,
            &pose,
            &self.tracer.branch_newton(),
            None,
        )
        .ok()?;
        let du_inf = state
            .u
            .iter()
            .zip(&warm.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if self
            .tracer
            .is_jump(du_inf, self.tracer.pose_travel(self.path, warm_lambda, lambda))
        {
            return None;
        }
        let active = self.tracer.system.detect_active(&state);
        let (_, k_red) = self
            .tracer
            .system
            .residual_and_reduced_tangent(&state, &active)
            .ok()?;
        let eig = smallest_eigenvalue(&k_red, &self.tracer.eigen).ok()?;
        Some((state, eig.mu_min))
    }
}

/// Run a grid of independent continuation cells on a worker pool; results
/// come back keyed by grid index so the outcome is independent of worker
/// count and scheduling.
pub fn parallel_cells<T, F>(cells: usize, workers: usize, runner: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || cells <= 1 {
        return (0..cells).map(runner).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(|| {
        use rayon::prelude::*;
        (0..cells).into_par_iter().map(runner).collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Single-DOF snap-through r(u, lambda) = u^3 - u - lambda, followed on
    /// the branch through u = -1 where the tangent 3u^2 - 1 is positive.
    /// Limit point: lambda_c = 2 / (3 sqrt(3)) at u = -1/sqrt(3).
    struct CubicSnap;

    impl ContinuationProblem for CubicSnap {
        type State = f64;

        fn solve_at(&mut self, lambda: f64, warm: &f64, _warm_lambda: f64) -> Option<(f64, f64)> {
            let mut u = *warm;
            for _ in 0..100 {
                let r = u * u * u - u - lambda;
                let k = 3.0 * u * u - 1.0;
                if r.abs() < 1e-14 {
                    return (k > 0.0).then_some((u, k));
                }
                if k.abs() < 1e-14 {
                    return None;
                }
                let du = -r / k;
                // Reject steps that hop across the fold to the other branch.
                if (u + du) > -1.0 / 3f64.sqrt() + 1e-9 {
                    return None;
                }
                u += du;
            }
            None
        }
    }

    #[test]
    fn cubic_limit_point_recovered() {
        let expected = 2.0 / (3.0 * 3f64.sqrt());
        let mut problem = CubicSnap;
        let c = locate_critical_point(&mut problem, (0.0, 0.6), &-1.0, 0.0, 1e-7).unwrap();
        assert!(
            (c.lambda_c - expected).abs() <= 1e-6,
            "{} vs {expected}",
            c.lambda_c
        );
        assert!(
            (c.last_stable_state - (-1.0 / 3f64.sqrt())).abs() < 1e-2,
            "state {} vs {}",
            c.last_stable_state,
            -1.0 / 3f64.sqrt()
        );
    }

    #[test]
    fn bracket_with_two_stable_ends_rejected() {
        let mut problem = CubicSnap;
        let err = locate_critical_point(&mut problem, (0.0, 0.1), &-1.0, 0.0, 1e-6);
        assert!(matches!(err, Err(Error::Bracketing(_))));
    }

    #[test]
    fn localization_is_deterministic() {
        let run = || {
            let mut problem = CubicSnap;
            locate_critical_point(&mut problem, (0.0, 0.6), &-1.0, 0.0, 1e-8)
                .unwrap()
                .lambda_c
        };
        let a = run();
        let b = run();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
