//! The constrained strip system: FEM model plus boundary conditions and the
//! reduced-DOF bookkeeping shared by the static and dynamic solvers.

use crate::band::BandMatrix;
use crate::constraints::{
    set_prescribed, DofMap, GraspConstraint, GripperPose, GroundContact, HoldConstraint,
};
use crate::error::Result;
use crate::fem::{FemModel, KinematicState, StressModel};
use crate::model::{MaterialParams, StripMesh};

/// Fraction of the total weight below which a contact force does not count
/// as a touch (penalty contact has no exact touch instant).
pub const TOUCH_FORCE_REL: f64 = 1e-6;

/// Mesh, material, and boundary conditions assembled into a solvable
/// system. Immutable during a solve; cheap to share per worker.
pub struct StripSystem {
    pub fem: FemModel,
    pub ground: Option<GroundContact>,
    pub hold: Option<HoldConstraint>,
    pub grasp: Option<GraspConstraint>,
    pub dofmap: DofMap,
    /// Consistent mass matrix over all DOFs.
    pub mass: BandMatrix,
    /// Gravity load vector over all DOFs.
    pub gravity: Vec<f64>,
    /// Total weight per unit width, N/m.
    pub weight: f64,
}

impl StripSystem {
    pub fn new(
        mesh: StripMesh,
        material: MaterialParams,
        stress_model: StressModel,
        ground: Option<GroundContact>,
        with_hold: bool,
        with_grasp: bool,
    ) -> Result<Self> {
        let hold = with_hold.then(|| HoldConstraint {
            node: mesh.holding_node,
        });
        let grasp = with_grasp.then(|| GraspConstraint::from_mesh(&mesh));
        let dofmap = DofMap::new(2 * mesh.node_count(), hold.as_ref(), grasp.as_ref())?;
        let weight = material.weight_per_width(mesh.geometry.length);
        let fem = FemModel::new(mesh, material, stress_model)?;
        let (mass, gravity) = fem.assemble_mass_and_gravity();
        Ok(Self {
            fem,
            ground,
            hold,
            grasp,
            dofmap,
            mass,
            gravity,
            weight,
        })
    }

    pub fn mesh(&self) -> &StripMesh {
        &self.fem.mesh
    }

    /// Default ground plane for this mesh: the bottom surface at rest.
    pub fn default_ground_plane(mesh: &StripMesh) -> f64 {
        -mesh.geometry.thickness / 2.0
    }

    /// Write the prescribed hold/grasp displacements for a pose into the
    /// state.
    pub fn apply_pose(&self, state: &mut KinematicState, pose: &GripperPose) {
        set_prescribed(
            state,
            self.mesh(),
            self.hold.as_ref(),
            self.grasp.as_ref(),
            pose,
        );
    }

    /// Physical residual f_int - f_grav - f_contact over all DOFs for a
    /// frozen contact active set. Err on element inversion.
    pub fn residual(&self, state: &KinematicState, active: &[usize]) -> Result<Vec<f64>> {
        let mut r = self.fem.internal_force(state)?;
        for (ri, gi) in r.iter_mut().zip(&self.gravity) {
            *ri -= gi;
        }
        if let Some(g) = &self.ground {
            let mut cf = vec![0.0; r.len()];
            let mut diag = vec![0.0; r.len()];
            g.forces_for_set(self.mesh(), state, active, &mut cf, &mut diag);
            for (ri, ci) in r.iter_mut().zip(&cf) {
                *ri -= ci;
            }
        }
        Ok(r)
    }

    /// Residual and reduced tangent at a state for a frozen active set.
    pub fn residual_and_reduced_tangent(
        &self,
        state: &KinematicState,
        active: &[usize],
    ) -> Result<(Vec<f64>, BandMatrix)> {
        let sys = self.fem.assemble_internal_and_tangent(state)?;
        let mut r = sys.internal_force;
        let mut k_full = sys.tangent;
        for (ri, gi) in r.iter_mut().zip(&self.gravity) {
            *ri -= gi;
        }
        if let Some(g) = &self.ground {
            let mut cf = vec![0.0; r.len()];
            let mut diag = vec![0.0; r.len()];
            g.forces_for_set(self.mesh(), state, active, &mut cf, &mut diag);
            for (ri, ci) in r.iter_mut().zip(&cf) {
                *ri -= ci;
            }
            for (dof, &d) in diag.iter().enumerate() {
                if d != 0.0 {
                    k_full.add(dof, dof, d);
                }
            }
        }
        let k_red = self.dofmap.reduce_band(&k_full);
        Ok((r, k_red))
    }

    /// Active contact set detected from the current state.
    pub fn detect_active(&self, state: &KinematicState) -> Vec<usize> {
        match &self.ground {
            Some(g) => g.detect_active(self.mesh(), state),
            None => Vec::new(),
        }
    }

    /// Nodes whose contact force exceeds the touch threshold, with world x.
    pub fn touching_nodes(&self, state: &KinematicState) -> Vec<(usize, f64)> {
        let Some(g) = &self.ground else {
            return Vec::new();
        };
        let threshold = TOUCH_FORCE_REL * self.weight;
        self.mesh()
            .bottom_nodes
            .iter()
            .filter_map(|&n| {
                let f = g.node_force(self.mesh(), state, n);
                (f > threshold).then(|| (n, state.world(self.mesh(), n)[0]))
            })
            .collect()
    }

    /// Largest world-x among touching nodes (the contact boundary), if any.
    pub fn contact_boundary(&self, state: &KinematicState) -> Option<f64> {
        self.touching_nodes(state)
            .into_iter()
            .map(|(_, x)| x)
            .fold(None, |acc, x| Some(acc.map_or(x, |a: f64| a.max(x))))
    }

    /// Total strain + gravity + contact-penalty energy (no kinetic part).
    pub fn potential_energy(&self, state: &KinematicState) -> Result<f64> {
        let mut e = self.fem.strain_energy(state)?;
        e += self.fem.gravity_potential(&self.gravity, state);
        if let Some(g) = &self.ground {
            for &n in &self.mesh().bottom_nodes {
                let d = g.penetration(self.mesh(), state, n);
                if d > 0.0 {
                    e += 0.5 * g.stiffness * self.mesh().bottom_tributary(n) * d * d;
                }
            }
        }
        Ok(e)
    }

    /// Kinetic energy of the free DOFs.
    pub fn kinetic_energy(&self, state: &KinematicState) -> f64 {
        self.fem.kinetic_energy(&self.mass, &state.v)
    }
}
