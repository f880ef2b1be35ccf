//! Implicit Newmark time integration for snap-through tracing.
//!
//! After a critical point the strip moves dynamically under a frozen
//! gripper pose. The Newmark-beta scheme (default beta = 1/4, gamma = 1/2)
//! with small mass-proportional damping integrates
//!
//!   M a + alpha_M M v + f_int(u) = f_grav + f_contact(u)
//!
//! until the kinetic energy stays below eps_K (rho l h g) l for a number of
//! consecutive steps. Only the settled state matters downstream (it is
//! handed back to the static continuation), so once the strip has touched
//! down and the motion has decayed, the integrator may optionally finish by
//! converging statically when the static solution is already within
//! tolerance of the dynamic state.

use crate::band::BandLu;
use crate::constraints::GripperPose;
use crate::error::{Error, Result};
use crate::fem::KinematicState;
use crate::solver::static_solve::{solve_static, NewtonOptions};
use crate::system::StripSystem;

#[derive(Debug, Clone)]
pub struct DynamicOptions {
    /// Time step, s.
    pub dt: f64,
    /// Newmark beta (>= 1/4 for unconditional stability).
    pub beta: f64,
    /// Newmark gamma (>= 1/2). Values above 1/2 add numerical dissipation
    /// that kills penalty-contact chatter; the settled state is insensitive
    /// to it (and is re-polished statically anyway).
    pub gamma: f64,
    /// Mass-proportional damping, 1/s.
    pub alpha_m: f64,
    /// Settle threshold: kinetic energy < eps_k * weight * length.
    pub settle_energy_rel: f64,
    /// Consecutive low-energy steps required to settle.
    pub settle_steps: usize,
    pub max_steps: usize,
    /// Trajectory sampling stride in steps.
    pub sample_stride: usize,
    /// After a touchdown, allow finishing by a static solve when it lands
    /// within `handoff_tol_rel * l` of the dynamic state.
    pub handoff_after_touch: bool,
    pub handoff_tol_rel: f64,
    /// Never settle before this many steps (guards the slow takeoff from a
    /// kicked near-critical state, where the kinetic energy starts tiny).
    pub min_steps: usize,
}

impl Default for DynamicOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            beta: 0.3025,
            gamma: 0.6,
            alpha_m: 2.0,
            settle_energy_rel: 1e-7,
            settle_steps: 200,
            max_steps: 60_000,
            sample_stride: 25,
            handoff_after_touch: true,
            handoff_tol_rel: 1e-3,
            min_steps: 0,
        }
    }
}

impl DynamicOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::ParamDomain(format!("dt must be positive, got {}", self.dt)));
        }
        if self.beta < 0.25 || self.gamma < 0.5 {
            return Err(Error::ParamDomain(format!(
                "Newmark (beta, gamma) = ({}, {}) outside the unconditional stability region",
                self.beta, self.gamma
            )));
        }
        if !(self.settle_energy_rel > 0.0) {
            return Err(Error::ParamDomain("settle_energy_rel must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrajectorySample {
    pub time: f64,
    pub state: KinematicState,
}

#[derive(Debug, Clone, Copy)]
pub struct NewContact {
    pub step: usize,
    pub time: f64,
    pub node: usize,
    pub world_x: f64,
}

#[derive(Debug)]
pub struct DynamicOutcome {
    pub settled_state: KinematicState,
    pub settled: bool,
    pub steps: usize,
    pub trajectory: Vec<TrajectorySample>,
    /// First contact event per node that was not touching at segment start,
    /// in step order.
    pub new_contacts: Vec<NewContact>,
    pub handoff_polished: bool,
    pub final_kinetic: f64,
}

/// Total mechanical energy: kinetic + strain + gravity + contact penalty.
pub fn total_energy(system: &StripSystem, state: &KinematicState) -> Result<f64> {
    Ok(system.kinetic_energy(state) + system.potential_energy(state)?)
}

/// Integrate the strip dynamics at a frozen gripper pose until settled.
///
/// Steps retry with a halved time step when the Newmark Newton solve fails
/// (snap-through transients are violent against the stiff contact
/// penalty); the step size recovers gradually afterwards.
pub fn integrate_dynamic(
    system: &StripSystem,
    initial: &KinematicState,
    pose: &GripperPose,
    options: &DynamicOptions,
    newton: &NewtonOptions,
) -> Result<DynamicOutcome> {
    options.validate()?;
    let n = system.fem.dof_count();

    let mut state = initial.clone();
    system.apply_pose(&mut state, pose);

    let m_red = system.dofmap.reduce_band(&system.mass);
    let m_lu = BandLu::factor(&m_red)
        .map_err(|e| Error::LinearSolve(format!("mass factorization: {e}")))?;

    // Consistent initial acceleration: M a0 = -r_phys - alpha_M M v0.
    let mut active = system.detect_active(&state);
    let mut accel = vec![0.0; n];
    {
        let r = system.residual(&state, &active)?;
        let mut mv = vec![0.0; n];
        system.mass.matvec(&state.v, &mut mv);
        let mut rhs = system.dofmap.reduce_vec(&r);
        let mv_red = system.dofmap.reduce_vec(&mv);
        for (x, m) in rhs.iter_mut().zip(&mv_red) {
            *x = -*x - options.alpha_m * m;
        }
        m_lu.solve_in_place(&mut rhs);
        system.dofmap.scatter_add(&rhs, 1.0, &mut accel);
    }

    let energy_floor = options.settle_energy_rel * system.weight * system.mesh().geometry.length;
    let touched_at_start: Vec<usize> =
        system.touching_nodes(&state).iter().map(|&(n, _)| n).collect();
    let mut contact_seen: Vec<bool> = vec![false; system.mesh().node_count()];
    for &t in &touched_at_start {
        contact_seen[t] = true;
    }

    let mut trajectory = vec![TrajectorySample {
        time: 0.0,
        state: state.clone(),
    }];
    let mut new_contacts = Vec::new();
    let mut low_energy_run = 0usize;
    let mut kinetic = system.kinetic_energy(&state);
    let mut time = 0.0f64;
    let mut dt_cur = options.dt;
    let dt_min = options.dt / 64.0;

    for step in 1..=options.max_steps {
        let u_n = state.u.clone();
        let v_n = state.v.clone();
        let a_n = accel.clone();

        // Attempt the step, halving dt on failure.
        let mut advanced = false;
        while !advanced {
            match newmark_step(
                system, &m_red, newton, options, &u_n, &v_n, &a_n, dt_cur, &mut active,
            )? {
                Some((new_state, new_accel)) => {
                    state = new_state;
                    accel = new_accel;
                    advanced = true;
                }
                None => {
                    dt_cur *= 0.5;
                    if dt_cur < dt_min {
                        return Err(Error::NonConvergence {
                            residual: f64::NAN,
                            tolerance: newton.tolerance,
                            iterations: newton.max_iterations,
                        });
                    }
                }
            }
        }
        time += dt_cur;
        dt_cur = (dt_cur * 1.26).min(options.dt);

        // New-contact events.
        for (node, wx) in system.touching_nodes(&state) {
            if !contact_seen[node] {
                contact_seen[node] = true;
                new_contacts.push(NewContact {
                    step,
                    time,
                    node,
                    world_x: wx,
                });
            }
        }

        kinetic = system.kinetic_energy(&state);
        if kinetic < energy_floor {
            low_energy_run += 1;
        } else {
            low_energy_run = 0;
        }

        if step % options.sample_stride == 0 {
            trajectory.push(TrajectorySample {
                time,
                state: state.clone(),
            });
        }

        if low_energy_run >= options.settle_steps && step >= options.min_steps {
            trajectory.push(TrajectorySample {
                time,
                state: state.clone(),
            });
            return Ok(DynamicOutcome {
                settled_state: state,
                settled: true,
                steps: step,
                trajectory,
                new_contacts,
                handoff_polished: false,
                final_kinetic: kinetic,
            });
        }

        // Optional early handoff once touched down and nearly quiescent.
        if options.handoff_after_touch
            && step >= options.min_steps
            && !new_contacts.is_empty()
            && kinetic < 1e3 * energy_floor
            && step % 20 == 0
        {
            let mut probe = state.clone();
            probe.v.iter_mut().for_each(|v| *v = 0.0);
            let mut probe_newton = newton.clone();
            probe_newton.max_iterations = 20;
            if solve_static(system, &mut probe, pose, &probe_newton, None).is_ok() {
                let tol = options.handoff_tol_rel * system.mesh().geometry.length;
                let dist = state
                    .u
                    .iter()
                    .zip(&probe.u)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                if dist <= tol {
                    trajectory.push(TrajectorySample {
                        time,
                        state: probe.clone(),
                    });
                    return Ok(DynamicOutcome {
                        settled_state: probe,
                        settled: true,
                        steps: step,
                        trajectory,
                        new_contacts,
                        handoff_polished: true,
                        final_kinetic: kinetic,
                    });
                }
            }
        }
    }

    Ok(DynamicOutcome {
        settled_state: state,
        settled: false,
        steps: options.max_steps,
        trajectory,
        new_contacts,
        handoff_polished: false,
        final_kinetic: kinetic,
    })
}

/// One implicit Newmark step of size dt from (u_n, v_n, a_n). Returns the
/// new state and acceleration, or None when the Newton iteration cannot be
/// completed at this step size (element inversion, unbounded growth, or a
/// chattering active set).
#[allow(clippy::too_many_arguments)]
fn newmark_step(
    system: &StripSystem,
    m_red: &crate::band::BandMatrix,
    newton: &NewtonOptions,
    options: &DynamicOptions,
    u_n: &[f64],
    v_n: &[f64],
    a_n: &[f64],
    dt: f64,
    active: &mut Vec<usize>,
) -> Result<Option<(KinematicState, Vec<f64>)>> {
    let n = system.fem.dof_count();
    let (beta, gamma) = (options.beta, options.gamma);
    let inv_bdt2 = 1.0 / (beta * dt * dt);
    let c_vel = options.alpha_m * gamma / (beta * dt);

    let newmark_a_v = |u: &[f64], a: &mut [f64], v: &mut [f64]| {
        for dof in 0..n {
            if system.dofmap.is_free(dof) {
                a[dof] =
                    (u[dof] - u_n[dof] - dt * v_n[dof]) * inv_bdt2 - (0.5 - beta) / beta * a_n[dof];
                v[dof] = v_n[dof] + dt * ((1.0 - gamma) * a_n[dof] + gamma * a[dof]);
            } else {
                a[dof] = 0.0;
                v[dof] = 0.0;
            }
        }
    };
    // Reduced dynamic residual; None on element inversion.
    let dyn_residual = |u_state: &KinematicState,
                        active: &[usize],
                        a: &mut [f64],
                        v: &mut [f64]|
     -> Result<Option<Vec<f64>>> {
        match system.residual(u_state, active) {
            Ok(r_full) => {
                newmark_a_v(&u_state.u, a, v);
                let mut ma = vec![0.0; n];
                system.mass.matvec(a, &mut ma);
                let mut mv = vec![0.0; n];
                system.mass.matvec(v, &mut mv);
                let mut r_dyn = system.dofmap.reduce_vec(&r_full);
                let ma_red = system.dofmap.reduce_vec(&ma);
                let mv_red = system.dofmap.reduce_vec(&mv);
                for ((r, am), vm) in r_dyn.iter_mut().zip(&ma_red).zip(&mv_red) {
                    *r += am + options.alpha_m * vm;
                }
                Ok(Some(r_dyn))
            }
            Err(Error::ElementInversion { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };

    // Predictor; fall back to the previous step state if it inverts.
    let mut trial = KinematicState {
        u: u_n.to_vec(),
        v: v_n.to_vec(),
    };
    for dof in 0..n {
        if system.dofmap.is_free(dof) {
            trial.u[dof] = u_n[dof] + dt * v_n[dof] + dt * dt * (0.5 - beta) * a_n[dof];
        }
    }
    let mut a_buf = vec![0.0; n];
    let mut v_buf = vec![0.0; n];
    let mut r_dyn = match dyn_residual(&trial, active, &mut a_buf, &mut v_buf)? {
        Some(r) => r,
        None => {
            trial.u.copy_from_slice(u_n);
            match dyn_residual(&trial, active, &mut a_buf, &mut v_buf)? {
                Some(r) => r,
                None => return Ok(None),
            }
        }
    };

    for _round in 0..newton.max_set_updates.max(1) {
        *active = system.detect_active(&trial);
        match dyn_residual(&trial, active, &mut a_buf, &mut v_buf)? {
            Some(r) => r_dyn = r,
            None => return Ok(None),
        }
        for _it in 0..newton.max_iterations {
            let rnorm = r_dyn.iter().map(|x| x * x).sum::<f64>().sqrt();
            if rnorm <= newton.tolerance {
                if system.detect_active(&trial) == *active {
                    let mut out = trial.clone();
                    out.v = v_buf.clone();
                    return Ok(Some((out, a_buf.clone())));
                }
                break; // refreeze and redo
            }

            let k_red_phys = {
                let sys = system.fem.assemble_internal_and_tangent(&trial)?;
                let mut k_full = sys.tangent;
                if let Some(g) = &system.ground {
                    let mut cf = vec![0.0; n];
                    let mut diag = vec![0.0; n];
                    g.forces_for_set(system.mesh(), &trial, active, &mut cf, &mut diag);
                    for (dof, &d) in diag.iter().enumerate() {
                        if d != 0.0 {
                            k_full.add(dof, dof, d);
                        }
                    }
                }
                system.dofmap.reduce_band(&k_full)
            };
            let mut k_eff = k_red_phys;
            k_eff.add_scaled(m_red, inv_bdt2 + c_vel);
            let lu = match BandLu::factor(&k_eff) {
                Ok(lu) => lu,
                Err(_) => return Ok(None),
            };
            let mut step_red = r_dyn.clone();
            step_red.iter_mut().for_each(|x| *x = -*x);
            lu.solve_in_place(&mut step_red);
            if step_red.iter().any(|x| !x.is_finite()) {
                return Ok(None);
            }

            let mut alpha = 1.0f64;
            let mut accepted = false;
            for _bt in 0..=newton.max_backtracks {
                let mut cand = trial.clone();
                system.dofmap.scatter_add(&step_red, alpha, &mut cand.u);
                if let Some(r_cand) = dyn_residual(&cand, active, &mut a_buf, &mut v_buf)? {
                    let cnorm = r_cand.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if cnorm.is_finite() && cnorm <= 1e3 * rnorm.max(newton.tolerance) {
                        trial = cand;
                        r_dyn = r_cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Ok(None);
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::GraspConstraint;
    use crate::fem::StressModel;
    use crate::model::{build_strip_mesh, material_from_ratios, StripGeometry};

    fn free_system() -> StripSystem {
        let mat = material_from_ratios(1e-3, 1.2, 0.0, 1.0, 9.81).unwrap();
        let geo = StripGeometry::new(0.3, mat.thickness, 1.0, 0.165).unwrap();
        let mesh = build_strip_mesh(geo, 8, 1).unwrap();
        StripSystem::new(mesh, mat, StressModel::StVenantKirchhoff, None, false, false).unwrap()
    }

    #[test]
    fn free_fall_single_step() {
        let sys = free_system();
        let state = KinematicState::zeros(sys.mesh().node_count());
        let pose = GraspConstraint::reference_pose(sys.mesh());
        let dt = 1e-3;
        let opts = DynamicOptions {
            dt,
            alpha_m: 0.0,
            max_steps: 1,
            settle_steps: 10_000,
            handoff_after_touch: false,
            ..Default::default()
        };
        let newton = NewtonOptions::for_weight(sys.weight);
        let out = integrate_dynamic(&sys, &state, &pose, &opts, &newton).unwrap();
        let expected = -0.5 * 9.81 * dt * dt;
        for node in 0..sys.mesh().node_count() {
            let dz = out.settled_state.u[2 * node + 1];
            assert!(
                (dz - expected).abs() < 1e-12,
                "node {node}: {dz:.3e} vs {expected:.3e}"
            );
            assert!(out.settled_state.u[2 * node].abs() < 1e-14);
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        // Clamped cantilever at equilibrium: kinetic energy stays below the
        // settle floor from step one, and the settled state matches the
        // initial state.
        let mat = material_from_ratios(1e-5, 20.0, 0.0, 1.0, 9.81).unwrap();
        let geo = StripGeometry::new(0.3, mat.thickness, 1.0, 0.165).unwrap();
        let mesh = build_strip_mesh(geo, 40, 2).unwrap();
        let sys =
            StripSystem::new(mesh, mat, StressModel::StVenantKirchhoff, None, false, true).unwrap();
        let pose = GraspConstraint::reference_pose(sys.mesh());
        let mut newton = NewtonOptions::for_weight(sys.weight);
        newton.tolerance = 1e-6 * sys.weight;
        let mut state = KinematicState::zeros(sys.mesh().node_count());
        solve_static(&sys, &mut state, &pose, &newton, None).unwrap();

        let opts = DynamicOptions {
            dt: 1e-3,
            settle_steps: 20,
            max_steps: 200,
            handoff_after_touch: false,
            ..Default::default()
        };
        let out = integrate_dynamic(&sys, &state, &pose, &opts, &newton).unwrap();
        assert!(out.settled, "should settle at once");
        assert_eq!(out.steps, 20);
        let drift = state
            .u
            .iter()
            .zip(&out.settled_state.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(drift < 1e-9 * sys.mesh().geometry.length, "drift {drift:.3e}");
    }

    #[test]
    fn undamped_swing_conserves_energy() {
        // Strip clamped at the grasped edge, released from horizontal, no
        // damping, no contact. Drift must stay small and shrink ~4x when dt
        // halves.
        let mat = material_from_ratios(1e-4, 50.0, 0.0, 1.0, 9.81).unwrap();
        let geo = StripGeometry::new(0.3, mat.thickness, 1.0, 0.165).unwrap();
        let mesh = build_strip_mesh(geo, 24, 2).unwrap();
        let sys =
            StripSystem::new(mesh, mat, StressModel::StVenantKirchhoff, None, false, true).unwrap();
        let pose = GraspConstraint::reference_pose(sys.mesh());
        let newton = NewtonOptions::for_weight(sys.weight);
        let state = KinematicState::zeros(sys.mesh().node_count());

        let drift_for = |dt: f64, steps: usize| -> f64 {
            let opts = DynamicOptions {
                dt,
                beta: 0.25,
                gamma: 0.5,
                alpha_m: 0.0,
                max_steps: steps,
                settle_steps: usize::MAX,
                settle_energy_rel: 1e-30,
                sample_stride: steps / 20,
                handoff_after_touch: false,
                ..Default::default()
            };
            let out = integrate_dynamic(&sys, &state, &pose, &opts, &newton).unwrap();
            let e0 = total_energy(&sys, &state).unwrap();
            let mut scale = 0.0f64;
            let mut worst = 0.0f64;
            for s in &out.trajectory {
                let e = total_energy(&sys, &s.state).unwrap();
                scale = scale.max(sys.kinetic_energy(&s.state));
                worst = worst.max((e - e0).abs());
            }
            worst / scale.max(1e-300)
        };

        let d1 = drift_for(2.5e-4, 1000);
        assert!(d1 <= 0.01, "energy drift {d1:.4e} over 1000 steps");
        let d2 = drift_for(1.25e-4, 2000);
        assert!(
            d2 <= d1 / 2.5,
            "halving dt should shrink drift ~4x: {d1:.3e} -> {d2:.3e}"
        );
    }
}
