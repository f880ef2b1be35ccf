//! Boundary conditions: frictionless ground contact, holding point,
//! grasping edge, and the gripper pose schedule.
//!
//! Contact is a unilateral penalty on bottom-surface nodes: a penetrating
//! node receives a purely vertical push force k_c A (z_g - z) with a
//! matching diagonal stiffness term. The hold and grasp conditions are
//! prescribed exactly (Dirichlet); grasped nodes move rigidly with the
//! gripper frame.

use crate::band::BandMatrix;
use crate::error::{Error, Result};
use crate::fem::KinematicState;
use crate::model::StripMesh;
use std::io::BufRead;
use std::path::Path;

/// Rigid ground plane with penalty contact.
#[derive(Debug, Clone, Copy)]
pub struct GroundContact {
    /// Plane height, meters. Default: -h/2, the strip bottom surface at rest.
    pub plane_z: f64,
    /// Penalty stiffness per unit area, N/m^3.
    pub stiffness: f64,
}

impl GroundContact {
    /// Signed penetration depth of a node: positive below the plane.
    /// Evaluated as (z_g - z_ref) - u_z rather than z_g - (z_ref + u_z);
    /// with the default plane at the resting bottom surface the constant
    /// part cancels exactly and the penalty force carries no round-off
    /// floor from the large reference coordinates.
    #[inline]
    pub fn penetration(&self, mesh: &StripMesh, state: &KinematicState, node: usize) -> f64 {
        (self.plane_z - mesh.nodes[node][1]) - state.u[2 * node + 1]
    }

    /// Nodes currently at or below the plane (bottom-surface nodes only).
    pub fn detect_active(&self, mesh: &StripMesh, state: &KinematicState) -> Vec<usize> {
        mesh.bottom_nodes
            .iter()
            .copied()
            .filter(|&n| self.penetration(mesh, state, n) >= 0.0)
            .collect()
    }

    /// Penalty force and diagonal stiffness for a frozen active set.
    /// Forces are vertical only; within a Newton solve the springs act
    /// bilaterally so the tangent stays consistent.
    pub fn forces_for_set(
        &self,
        mesh: &StripMesh,
        state: &KinematicState,
        active: &[usize],
        force: &mut [f64],
        stiffness_diag: &mut [f64],
    ) {
        for &n in active {
            let a = mesh.bottom_tributary(n);
            force[2 * n + 1] += self.stiffness * a * self.penetration(mesh, state, n);
            stiffness_diag[2 * n + 1] += self.stiffness * a;
        }
    }

    /// Contact force of a single node at the given state, zero if not
    /// penetrating.
    pub fn node_force(&self, mesh: &StripMesh, state: &KinematicState, node: usize) -> f64 {
        let pen = self.penetration(mesh, state, node);
        if pen > 0.0 {
            self.stiffness * mesh.bottom_tributary(node) * pen
        } else {
            0.0
        }
    }
}

/// Contact contribution evaluated directly from the current state: the
/// active set is every penetrating bottom node. Returns the force vector,
/// the diagonal stiffness contribution, and the active set.
pub fn contact_contribution(
    mesh: &StripMesh,
    state: &KinematicState,
    ground: &GroundContact,
) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let active = ground.detect_active(mesh, state);
    let mut force = vec![0.0; mesh.dof_count()];
    let mut diag = vec![0.0; mesh.dof_count()];
    ground.forces_for_set(mesh, state, &active, &mut force, &mut diag);
    (force, diag, active)
}

/// Holding point: the bottom node at the hold end, fixed in both x and z.
#[derive(Debug, Clone, Copy)]
pub struct HoldConstraint {
    pub node: usize,
}

/// Gripper pose in the model frame: mid-surface anchor of the grasped edge
/// plus edge rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperPose {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
}

/// Grasping edge: the nz+1 nodes at x = +l/2, rigidly attached to the
/// gripper frame.
#[derive(Debug, Clone)]
pub struct GraspConstraint {
    pub nodes: Vec<usize>,
    /// Node offsets in the gripper frame (reference position relative to the
    /// reference anchor (l/2, 0)).
    offsets: Vec<[f64; 2]>,
}

impl GraspConstraint {
    pub fn from_mesh(mesh: &StripMesh) -> Self {
        let anchor = [mesh.geometry.length / 2.0, 0.0];
        let nodes = mesh.grasped_nodes.clone();
        let offsets = nodes
            .iter()
            .map(|&n| {
                [
                    mesh.nodes[n][0] - anchor[0],
                    mesh.nodes[n][1] - anchor[1],
                ]
            })
            .collect();
        Self { nodes, offsets }
    }

    /// The reference pose that reproduces the undeformed edge.
    pub fn reference_pose(mesh: &StripMesh) -> GripperPose {
        GripperPose {
            x: mesh.geometry.length / 2.0,
            z: 0.0,
            theta: 0.0,
        }
    }

    /// Prescribed displacement of each grasped node at the given pose.
    pub fn prescribed(&self, mesh: &StripMesh, pose: &GripperPose) -> Vec<(usize, [f64; 2])> {
        let (s, c) = pose.theta.sin_cos();
        self.nodes
            .iter()
            .zip(&self.offsets)
            .map(|(&n, off)| {
                let wx = pose.x + c * off[0] - s * off[1];
                let wz = pose.z + s * off[0] + c * off[1];
                (n, [wx - mesh.nodes[n][0], wz - mesh.nodes[n][1]])
            })
            .collect()
    }
}

/// Piecewise-linear gripper pose schedule over lambda in [0, 1].
#[derive(Debug, Clone)]
pub struct GripperPath {
    waypoints: Vec<Waypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub lambda: f64,
    pub x: f64,
    pub z: f64,
    pub theta: f64,
}

impl GripperPath {
    pub fn new(waypoints: Vec<Waypoint>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::ParamDomain(format!(
                "path needs at least 2 waypoints, got {}",
                waypoints.len()
            )));
        }
        if waypoints.first().unwrap().lambda != 0.0 || waypoints.last().unwrap().lambda != 1.0 {
            return Err(Error::ParamDomain(
                "path lambda must span exactly [0, 1]".into(),
            ));
        }
        for w in waypoints.windows(2) {
            if !(w[1].lambda > w[0].lambda) {
                return Err(Error::ParamDomain(format!(
                    "path lambda must be strictly increasing ({} then {})",
                    w[0].lambda, w[1].lambda
                )));
            }
        }
        if waypoints
            .iter()
            .any(|w| !(w.lambda.is_finite() && w.x.is_finite() && w.z.is_finite() && w.theta.is_finite()))
        {
            return Err(Error::ParamDomain("path contains non-finite values".into()));
        }
        Ok(Self { waypoints })
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    /// Pose at lambda by piecewise-linear interpolation; exact at waypoints.
    pub fn pose_at(&self, lambda: f64) -> Result<GripperPose> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::ParamDomain(format!(
                "lambda {lambda} outside [0, 1]"
            )));
        }
        let w = &self.waypoints;
        let k = match w.binary_search_by(|p| p.lambda.partial_cmp(&lambda).unwrap()) {
            Ok(i) => {
                let p = w[i];
                return Ok(GripperPose {
                    x: p.x,
                    z: p.z,
                    theta: p.theta,
                });
            }
            Err(i) => i,
        };
        let (a, b) = (w[k - 1], w[k]);
        let t = (lambda - a.lambda) / (b.lambda - a.lambda);
        Ok(GripperPose {
            x: a.x + t * (b.x - a.x),
            z: a.z + t * (b.z - a.z),
            theta: a.theta + t * (b.theta - a.theta),
        })
    }

    /// Euclidean arc length of the position polyline.
    pub fn arc_length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| ((w[1].x - w[0].x).powi(2) + (w[1].z - w[0].z).powi(2)).sqrt())
            .sum()
    }

    /// Write the path file: header plus one `lambda,x,z,theta` row per
    /// waypoint, 17 significant digits, model-frame coordinates.
    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut out = String::from("lambda,x,z,theta\n");
        for w in &self.waypoints {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                w.lambda, w.x, w.z, w.theta
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let reader = std::io::BufReader::new(file);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                reason: "empty file".into(),
            })?
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        if header.trim() != "lambda,x,z,theta" {
            return Err(Error::Parse {
                path: path.display().to_string(),
                reason: format!("expected header 'lambda,x,z,theta', got '{header}'"),
            });
        }
        let mut waypoints = Vec::new();
        for (ln, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    reason: format!("line {}: expected 4 fields, got {}", ln + 2, fields.len()),
                });
            }
            let mut vals = [0.0f64; 4];
            for (i, f) in fields.iter().enumerate() {
                vals[i] = f.trim().parse().map_err(|_| Error::Parse {
                    path: path.display().to_string(),
                    reason: format!("line {}: bad number '{f}'", ln + 2),
                })?;
            }
            waypoints.push(Waypoint {
                lambda: vals[0],
                x: vals[1],
                z: vals[2],
                theta: vals[3],
            });
        }
        Self::new(waypoints)
    }
}

/// Mapping between full and reduced (free) DOFs after eliminating the
/// prescribed hold and grasp DOFs.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Global DOF index of each reduced DOF, ascending.
    free: Vec<usize>,
    /// Reduced index per global DOF, usize::MAX for prescribed.
    reduced_of: Vec<usize>,
    prescribed: Vec<usize>,
}

impl DofMap {
    /// Build from the constraint set. Errors if two constraints prescribe
    /// the same DOF.
    pub fn new(
        dof_count: usize,
        hold: Option<&HoldConstraint>,
        grasp: Option<&GraspConstraint>,
    ) -> Result<Self> {
        let mut prescribed_flags = vec![false; dof_count];
        let mut mark = |dof: usize| -> Result<()> {
            if prescribed_flags[dof] {
                return Err(Error::ConstraintConflict { dof });
            }
            prescribed_flags[dof] = true;
            Ok(())
        };
        if let Some(h) = hold {
            mark(2 * h.node)?;
            mark(2 * h.node + 1)?;
        }
        if let Some(g) = grasp {
            for &n in &g.nodes {
                mark(2 * n)?;
                mark(2 * n + 1)?;
            }
        }
        let mut free = Vec::with_capacity(dof_count);
        let mut prescribed = Vec::new();
        let mut reduced_of = vec![usize::MAX; dof_count];
        for dof in 0..dof_count {
            if prescribed_flags[dof] {
                prescribed.push(dof);
            } else {
                reduced_of[dof] = free.len();
                free.push(dof);
            }
        }
        Ok(Self {
            free,
            reduced_of,
            prescribed,
        })
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn prescribed_dofs(&self) -> &[usize] {
        &self.prescribed
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.reduced_of[dof] != usize::MAX
    }

    /// Gather the free entries of a full vector.
    pub fn reduce_vec(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Scatter a reduced vector into the free entries of a full vector,
    /// accumulating with the given scale.
    pub fn scatter_add(&self, reduced: &[f64], scale: f64, full: &mut [f64]) {
        for (r, &d) in self.free.iter().enumerate() {
            full[d] += scale * reduced[r];
        }
    }

    /// Row/column reduction of a full band matrix to the free DOFs.
    /// Symmetry is preserved entry-for-entry.
    pub fn reduce_band(&self, full: &BandMatrix) -> BandMatrix {
        let m = self.free.len();
        let hb = full.kl.max(full.ku);
        let mut out = BandMatrix::zeros(m, hb, hb);
        for (rj, &gj) in self.free.iter().enumerate() {
            let lo = gj.saturating_sub(hb);
            let hi = (gj + hb).min(full.n - 1);
            for gi in lo..=hi {
                let ri = self.reduced_of[gi];
                if ri != usize::MAX {
                    let v = full.get(gi, gj);
                    if v != 0.0 {
                        out.add(ri, rj, v);
                    }
                }
            }
        }
        out
    }

    /// Add `value` to the diagonal of a reduced matrix at the reduced image
    /// of every free DOF (used by the internal-friction regularization).
    pub fn add_reduced_diagonal(&self, out: &mut BandMatrix, value: f64) {
        for r in 0..self.free.len() {
            out.add(r, r, value);
        }
    }
}

/// Write the prescribed displacements of the hold and grasp constraints
/// into the state.
pub fn set_prescribed(
    state: &mut KinematicState,
    mesh: &StripMesh,
    hold: Option<&HoldConstraint>,
    grasp: Option<&GraspConstraint>,
    pose: &GripperPose,
) {
    if let Some(h) = hold {
        state.u[2 * h.node] = 0.0;
        state.u[2 * h.node + 1] = 0.0;
        state.v[2 * h.node] = 0.0;
        state.v[2 * h.node + 1] = 0.0;
    }
    if let Some(g) = grasp {
        for (n, du) in g.prescribed(mesh, pose) {
            state.u[2 * n] = du[0];
            state.u[2 * n + 1] = du[1];
            state.v[2 * n] = 0.0;
            state.v[2 * n + 1] = 0.0;
        }
    }
}

/// Sum of (f_int - f_ext) over the grasped DOFs: the force the gripper
/// exerts on the strip.
pub fn grasp_reaction(full_residual: &[f64], grasp: &GraspConstraint) -> [f64; 2] {
    let mut r = [0.0; 2];
    for &n in &grasp.nodes {
        r[0] += full_residual[2 * n];
        r[1] += full_residual[2 * n + 1];
    }
    r
}

pub fn hold_reaction(full_residual: &[f64], hold: &HoldConstraint) -> [f64; 2] {
    [
        full_residual[2 * hold.node],
        full_residual[2 * hold.node + 1],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_strip_mesh, StripGeometry};

    fn mesh() -> StripMesh {
        let g = StripGeometry::new(1.0, 0.02, 1.0, 0.6).unwrap();
        build_strip_mesh(g, 10, 2).unwrap()
    }

    #[test]
    fn pose_interpolation() {
        let p = GripperPath::new(vec![
            Waypoint {
                lambda: 0.0,
                x: 0.5,
                z: 0.0,
                theta: 0.0,
            },
            Waypoint {
                lambda: 1.0,
                x: -0.1,
                z: 0.2,
                theta: std::f64::consts::PI,
            },
        ])
        .unwrap();
        let at0 = p.pose_at(0.0).unwrap();
        assert_eq!((at0.x, at0.z, at0.theta), (0.5, 0.0, 0.0));
        let at1 = p.pose_at(1.0).unwrap();
        assert_eq!(at1.x, -0.1);
        let mid = p.pose_at(0.5).unwrap();
        assert!((mid.x - 0.2).abs() < 1e-15);
        assert!((mid.z - 0.1).abs() < 1e-15);
        assert!((mid.theta - std::f64::consts::PI / 2.0).abs() < 1e-15);
        assert!(p.pose_at(1.5).is_err());
        assert!(p.pose_at(-0.1).is_err());
    }

    #[test]
    fn path_validation() {
        let w = |l: f64| Waypoint {
            lambda: l,
            x: 0.0,
            z: 0.0,
            theta: 0.0,
        };
        assert!(GripperPath::new(vec![w(0.0)]).is_err());
        assert!(GripperPath::new(vec![w(0.0), w(0.5), w(0.4), w(1.0)]).is_err());
        assert!(GripperPath::new(vec![w(0.1), w(1.0)]).is_err());
        assert!(GripperPath::new(vec![w(0.0), w(0.5), w(1.0)]).is_ok());
    }

    #[test]
    fn path_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("test.path");
        let p = GripperPath::new(vec![
            Waypoint {
                lambda: 0.0,
                x: 0.15,
                z: 0.0,
                theta: 0.0,
            },
            Waypoint {
                lambda: 0.25,
                x: 0.1234567890123456,
                z: 0.05,
                theta: 1.0 / 3.0,
            },
            Waypoint {
                lambda: 1.0,
                x: -0.12,
                z: 0.0,
                theta: std::f64::consts::PI,
            },
        ])
        .unwrap();
        p.write_file(&file).unwrap();
        let q = GripperPath::read_file(&file).unwrap();
        assert_eq!(p.waypoints(), q.waypoints());

        let text = std::fs::read_to_string(&file).unwrap();
        assert!(text.starts_with("lambda,x,z,theta\n"));
    }

    #[test]
    fn grasp_prescription_is_rigid() {
        let m = mesh();
        let g = GraspConstraint::from_mesh(&m);
        let pose = GripperPose {
            x: 0.2,
            z: 0.3,
            theta: std::f64::consts::FRAC_PI_2,
        };
        let pres = g.prescribed(&m, &pose);
        assert_eq!(pres.len(), 3);
        // Edge offsets are (0, zeta); after a 90 degree rotation the nodes
        // line up horizontally at distance zeta left of the anchor.
        for (n, du) in pres {
            let zeta = m.nodes[n][1];
            let world = [m.nodes[n][0] + du[0], m.nodes[n][1] + du[1]];
            assert!((world[0] - (pose.x - zeta)).abs() < 1e-15);
            assert!((world[1] - pose.z).abs() < 1e-14);
        }
    }

    #[test]
    fn dofmap_counts_and_conflict() {
        let m = mesh();
        let hold = HoldConstraint {
            node: m.holding_node,
        };
        let grasp = GraspConstraint::from_mesh(&m);
        let map = DofMap::new(m.dof_count(), Some(&hold), Some(&grasp)).unwrap();
        let expected = 2 * m.node_count() - 2 - 2 * grasp.nodes.len();
        assert_eq!(map.free_count(), expected);

        // No constraints: identity mapping.
        let id = DofMap::new(m.dof_count(), None, None).unwrap();
        assert_eq!(id.free_count(), m.dof_count());

        // Conflict: grasp artificially containing the hold node.
        let mut bad = grasp.clone();
        bad.nodes.push(m.holding_node);
        bad.offsets.push([0.0, 0.0]);
        assert!(matches!(
            DofMap::new(m.dof_count(), Some(&hold), Some(&bad)),
            Err(Error::ConstraintConflict { .. })
        ));
    }

    #[test]
    fn contact_unit_cases() {
        let m = mesh();
        let ground = GroundContact {
            plane_z: -0.01,
            stiffness: 1e5,
        };
        let state = KinematicState::zeros(m.node_count());
        // All nodes exactly at the plane count as active but carry no force.
        let (f, _, active) = contact_contribution(&m, &state, &ground);
        assert_eq!(active.len(), m.bottom_nodes.len());
        assert!(f.iter().all(|&x| x == 0.0));

        // Lift everything: empty set.
        let mut lifted = state.clone();
        for n in 0..m.node_count() {
            lifted.u[2 * n + 1] = 0.05;
        }
        let (f, _, active) = contact_contribution(&m, &lifted, &ground);
        assert!(active.is_empty());
        assert!(f.iter().all(|&x| x == 0.0));

        // One node pushed below by d: upward force k A d, no x force.
        let mut pen = lifted.clone();
        let node = m.bottom_nodes[3];
        let d = 1e-4;
        pen.u[2 * node + 1] = -d;
        let (f, diag, active) = contact_contribution(&m, &pen, &ground);
        assert_eq!(active, vec![node]);
        let a = m.bottom_tributary(node);
        assert!((f[2 * node + 1] - ground.stiffness * a * d).abs() < 1e-12);
        assert_eq!(f[2 * node], 0.0);
        assert!(diag[2 * node + 1] > 0.0);
    }
}
