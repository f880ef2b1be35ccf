//! Element kinematics, constitutive evaluation, and global assembly.
//!
//! Total-Lagrangian formulation on 4-node bilinear quadrilaterals with
//! 2x2 Gauss quadrature. Kinematics per quadrature point:
//!
//!   F = I + du/dX,   E = (F^T F - I) / 2,   S = C : E  (Voigt, in-plane)
//!
//! The internal nodal force is the gradient of the total strain energy
//! (1/2) E : C : E with respect to nodal displacements, and the tangent is
//! its Jacobian (material + geometric parts), assembled into a band matrix.
//! The mass matrix is consistent, built from the same shape functions.
//!
//! An alternative stress evaluation S = det F F^{-1} (C : E) F^{-T} is kept
//! behind [`StressModel::PulledBack`]; it is not variationally consistent
//! with a stored energy, so its element tangent is formed by central finite
//! differences of the element force and symmetrized.

use crate::band::BandMatrix;
use crate::error::{Error, Result};
use crate::model::{elasticity_matrix_2d, MaterialParams, StripMesh};
use nalgebra::{Matrix2, Matrix3, Vector3};

const GAUSS: [(f64, f64); 4] = {
    const G: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
    [(-G, -G), (G, -G), (G, G), (-G, G)]
};

/// Constitutive convention for the second Piola-Kirchhoff stress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressModel {
    /// S = C : E, work-conjugate to Green-Lagrange strain.
    #[default]
    StVenantKirchhoff,
    /// S = det F F^{-1} (C : E) F^{-T}.
    PulledBack,
}

/// Nodal displacement and velocity fields.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState {
    /// Interleaved (u_x, u_z) per node.
    pub u: Vec<f64>,
    /// Interleaved (v_x, v_z) per node; zero for static problems.
    pub v: Vec<f64>,
}

impl KinematicState {
    pub fn zeros(node_count: usize) -> Self {
        Self {
            u: vec![0.0; 2 * node_count],
            v: vec![0.0; 2 * node_count],
        }
    }

    /// Current world position of a node.
    pub fn world(&self, mesh: &StripMesh, node: usize) -> [f64; 2] {
        [
            mesh.nodes[node][0] + self.u[2 * node],
            mesh.nodes[node][1] + self.u[2 * node + 1],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }
}

/// Per-quadrature-point kinematic and stress measures of one element.
#[derive(Debug, Clone)]
pub struct ElementEval {
    /// Deformation gradient per quadrature point.
    pub deformation_gradient: [Matrix2<f64>; 4],
    /// Green-Lagrange strain per quadrature point.
    pub green_lagrange: [Matrix2<f64>; 4],
    /// Second Piola-Kirchhoff stress per quadrature point.
    pub pk2: [Matrix2<f64>; 4],
}

/// E = (F^T F - I) / 2. Symmetric by construction.
pub fn green_lagrange(f: &Matrix2<f64>) -> Matrix2<f64> {
    let c = f.transpose() * f;
    Matrix2::new(
        0.5 * (c[(0, 0)] - 1.0),
        0.5 * c[(0, 1)],
        0.5 * c[(1, 0)],
        0.5 * (c[(1, 1)] - 1.0),
    )
    .symmetric_part()
}

/// Voigt packing (E_xx, E_zz, 2 E_xz) of a symmetric 2x2 strain.
#[inline]
fn strain_voigt(e: &Matrix2<f64>) -> Vector3<f64> {
    Vector3::new(e[(0, 0)], e[(1, 1)], e[(0, 1)] + e[(1, 0)])
}

/// S = C : E through the in-plane Voigt sub-matrix.
pub fn pk2_stress(strain: &Matrix2<f64>, c2d: &Matrix3<f64>) -> Matrix2<f64> {
    let sv = c2d * strain_voigt(strain);
    Matrix2::new(sv[0], sv[2], sv[2], sv[1])
}

fn pk2_pulled_back(f: &Matrix2<f64>, strain: &Matrix2<f64>, c2d: &Matrix3<f64>) -> Matrix2<f64> {
    let ce = pk2_stress(strain, c2d);
    let det = f[(0, 0)] * f[(1, 1)] - f[(0, 1)] * f[(1, 0)];
    let finv = Matrix2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]) / det;
    (finv * ce * finv.transpose() * det).symmetric_part()
}

/// Precomputed element geometry: shape gradients w.r.t. reference
/// coordinates and the Jacobian weight at each quadrature point.
struct ElementGeometry {
    /// grad_X N_a at each quadrature point, [gp][node][component].
    grads: [[[f64; 2]; 4]; 4],
    /// det J * quadrature weight at each quadrature point.
    jw: [f64; 4],
    /// Integral of N_a over the element, for mass/gravity.
    n_int: [f64; 4],
    /// Integral of N_a N_b over the element.
    nn_int: [[f64; 4]; 4],
}

fn shape_derivs(xi: f64, eta: f64) -> [[f64; 2]; 4] {
    // Local node order: (-1,-1), (1,-1), (1,1), (-1,1).
    [
        [-0.25 * (1.0 - eta), -0.25 * (1.0 - xi)],
        [0.25 * (1.0 - eta), -0.25 * (1.0 + xi)],
        [0.25 * (1.0 + eta), 0.25 * (1.0 + xi)],
        [-0.25 * (1.0 + eta), 0.25 * (1.0 - xi)],
    ]
}

fn shape_values(xi: f64, eta: f64) -> [f64; 4] {
    [
        0.25 * (1.0 - xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 - eta),
        0.25 * (1.0 + xi) * (1.0 + eta),
        0.25 * (1.0 - xi) * (1.0 + eta),
    ]
}

impl ElementGeometry {
    fn new(coords: &[[f64; 2]; 4]) -> Result<Self> {
        let mut grads = [[[0.0; 2]; 4]; 4];
        let mut jw = [0.0; 4];
        let mut n_int = [0.0; 4];
        let mut nn_int = [[0.0; 4]; 4];
        for (q, &(xi, eta)) in GAUSS.iter().enumerate() {
            let dn = shape_derivs(xi, eta);
            let mut j = Matrix2::<f64>::zeros();
            for a in 0..4 {
                for r in 0..2 {
                    for c in 0..2 {
                        j[(r, c)] += coords[a][r] * dn[a][c];
                    }
                }
            }
            let det = j[(0, 0)] * j[(1, 1)] - j[(0, 1)] * j[(1, 0)];
            if det <= 0.0 {
                return Err(Error::Geometry(format!(
                    "non-positive reference Jacobian {det:.3e}"
                )));
            }
            let jinv_t = Matrix2::new(j[(1, 1)], -j[(1, 0)], -j[(0, 1)], j[(0, 0)]) / det;
            for a in 0..4 {
                let g = jinv_t * nalgebra::Vector2::new(dn[a][0], dn[a][1]);
                grads[q][a] = [g[0], g[1]];
            }
            jw[q] = det; // 2x2 Gauss weights are all 1
            let nv = shape_values(xi, eta);
            for a in 0..4 {
                n_int[a] += nv[a] * det;
                for b in 0..4 {
                    nn_int[a][b] += nv[a] * nv[b] * det;
                }
            }
        }
        Ok(Self {
            grads,
            jw,
            n_int,
            nn_int,
        })
    }
}

/// Assembled global quantities at one state.
pub struct AssembledSystem {
    /// Internal force vector over all DOFs (gradient of strain energy).
    pub internal_force: Vec<f64>,
    /// Tangent stiffness over all DOFs, band storage, exactly symmetric.
    pub tangent: BandMatrix,
}

/// FEM model: mesh plus material, with precomputed element geometry.
pub struct FemModel {
    pub mesh: StripMesh,
    pub material: MaterialParams,
    pub stress_model: StressModel,
    c2d: Matrix3<f64>,
    geo: Vec<ElementGeometry>,
    band_halfwidth: usize,
}

impl FemModel {
    pub fn new(mesh: StripMesh, material: MaterialParams, stress_model: StressModel) -> Result<Self> {
        let c2d = elasticity_matrix_2d(material.youngs_modulus, material.poissons_ratio)?;
        let mut geo = Vec::with_capacity(mesh.elements.len());
        for el in &mesh.elements {
            let coords = [
                mesh.nodes[el[0]],
                mesh.nodes[el[1]],
                mesh.nodes[el[2]],
                mesh.nodes[el[3]],
            ];
            geo.push(ElementGeometry::new(&coords)?);
        }
        // Largest DOF index difference inside one element.
        let mut hb = 0usize;
        for el in &mesh.elements {
            let lo = *el.iter().min().unwrap();
            let hi = *el.iter().max().unwrap();
            hb = hb.max(2 * (hi - lo) + 1);
        }
        Ok(Self {
            mesh,
            material,
            stress_model,
            c2d,
            geo,
            band_halfwidth: hb,
        })
    }

    pub fn dof_count(&self) -> usize {
        self.mesh.dof_count()
    }

    pub fn band_halfwidth(&self) -> usize {
        self.band_halfwidth
    }

    pub fn elasticity_2d(&self) -> &Matrix3<f64> {
        &self.c2d
    }

    /// Deformation gradient of one element at one quadrature point.
    pub fn deformation_gradient(
        &self,
        element: usize,
        state: &KinematicState,
        quad_point: usize,
    ) -> Matrix2<f64> {
        let el = &self.mesh.elements[element];
        let g = &self.geo[element].grads[quad_point];
        let mut f = Matrix2::identity();
        for a in 0..4 {
            let ux = state.u[2 * el[a]];
            let uz = state.u[2 * el[a] + 1];
            f[(0, 0)] += ux * g[a][0];
            f[(0, 1)] += ux * g[a][1];
            f[(1, 0)] += uz * g[a][0];
            f[(1, 1)] += uz * g[a][1];
        }
        f
    }

    /// Kinematic and stress measures of one element; reports inversion.
    pub fn element_eval(&self, element: usize, state: &KinematicState) -> Result<ElementEval> {
        let mut fs = [Matrix2::zeros(); 4];
        let mut es = [Matrix2::zeros(); 4];
        let mut ss = [Matrix2::zeros(); 4];
        for q in 0..4 {
            let f = self.deformation_gradient(element, state, q);
            if f.determinant() <= 0.0 {
                return Err(Error::ElementInversion {
                    elements: vec![element],
                });
            }
            let e = green_lagrange(&f);
            let s = match self.stress_model {
                StressModel::StVenantKirchhoff => pk2_stress(&e, &self.c2d),
                StressModel::PulledBack => pk2_pulled_back(&f, &e, &self.c2d),
            };
            fs[q] = f;
            es[q] = e;
            ss[q] = s;
        }
        Ok(ElementEval {
            deformation_gradient: fs,
            green_lagrange: es,
            pk2: ss,
        })
    }

    /// Element internal force (8-vector) at the given nodal displacements.
    /// Returns Err on inversion.
    fn element_force(&self, element: usize, ue: &[f64; 8]) -> Result<[f64; 8]> {
        let geo = &self.geo[element];
        let mut fe = [0.0f64; 8];
        for q in 0..4 {
            let g = &geo.grads[q];
            let mut f = Matrix2::identity();
            for a in 0..4 {
                f[(0, 0)] += ue[2 * a] * g[a][0];
                f[(0, 1)] += ue[2 * a] * g[a][1];
                f[(1, 0)] += ue[2 * a + 1] * g[a][0];
                f[(1, 1)] += ue[2 * a + 1] * g[a][1];
            }
            if f.determinant() <= 0.0 {
                return Err(Error::ElementInversion {
                    elements: vec![element],
                });
            }
            let e = green_lagrange(&f);
            let s = match self.stress_model {
                StressModel::StVenantKirchhoff => pk2_stress(&e, &self.c2d),
                StressModel::PulledBack => pk2_pulled_back(&f, &e, &self.c2d),
            };
            let w = geo.jw[q];
            // f_int[a,i] = (F S)_{iJ} dN_a/dX_J
            let fs = f * s;
            for a in 0..4 {
                fe[2 * a] += (fs[(0, 0)] * g[a][0] + fs[(0, 1)] * g[a][1]) * w;
                fe[2 * a + 1] += (fs[(1, 0)] * g[a][0] + fs[(1, 1)] * g[a][1]) * w;
            }
        }
        Ok(fe)
    }

    /// Internal force over all DOFs.
    pub fn internal_force(&self, state: &KinematicState) -> Result<Vec<f64>> {
        let mut force = vec![0.0; self.dof_count()];
        let mut inverted = Vec::new();
        for (idx, el) in self.mesh.elements.iter().enumerate() {
            let ue = self.gather(el, state);
            match self.element_force(idx, &ue) {
                Ok(fe) => {
                    for a in 0..4 {
                        force[2 * el[a]] += fe[2 * a];
                        force[2 * el[a] + 1] += fe[2 * a + 1];
                    }
                }
                Err(_) => inverted.push(idx),
            }
        }
        if !inverted.is_empty() {
            return Err(Error::ElementInversion { elements: inverted });
        }
        Ok(force)
    }

    /// Total strain energy at the state.
    pub fn strain_energy(&self, state: &KinematicState) -> Result<f64> {
        let mut w_total = 0.0;
        for (idx, _) in self.mesh.elements.iter().enumerate() {
            let eval = self.element_eval(idx, state)?;
            for q in 0..4 {
                let ev = strain_voigt(&eval.green_lagrange[q]);
                // For the pulled-back variant this is still the StVK energy;
                // that variant has no stored energy of its own.
                let sv = self.c2d * ev;
                w_total += 0.5 * ev.dot(&sv) * self.geo[idx].jw[q];
            }
        }
        Ok(w_total)
    }

    fn gather(&self, el: &[usize; 4], state: &KinematicState) -> [f64; 8] {
        let mut ue = [0.0; 8];
        for a in 0..4 {
            ue[2 * a] = state.u[2 * el[a]];
            ue[2 * a + 1] = state.u[2 * el[a] + 1];
        }
        ue
    }

    /// Assemble the internal force and tangent stiffness (material +
    /// geometric) over all DOFs. The band matrix is mirrored from the upper
    /// triangle, so it is symmetric to the last bit.
    pub fn assemble_internal_and_tangent(&self, state: &KinematicState) -> Result<AssembledSystem> {
        let n = self.dof_count();
        let hb = self.band_halfwidth;
        let mut tangent = BandMatrix::zeros(n, hb, hb);
        let mut force = vec![0.0; n];
        let mut inverted = Vec::new();

        for (idx, el) in self.mesh.elements.iter().enumerate() {
            let geo = &self.geo[idx];
            let ue = self.gather(el, state);
            let mut fe = [0.0f64; 8];
            let mut ke = [[0.0f64; 8]; 8];
            let mut bad = false;

            match self.stress_model {
                StressModel::StVenantKirchhoff => {
                    for q in 0..4 {
                        let g = &geo.grads[q];
                        let mut f = Matrix2::identity();
                        for a in 0..4 {
                            f[(0, 0)] += ue[2 * a] * g[a][0];
                            f[(0, 1)] += ue[2 * a] * g[a][1];
                            f[(1, 0)] += ue[2 * a + 1] * g[a][0];
                            f[(1, 1)] += ue[2 * a + 1] * g[a][1];
                        }
                        if f.determinant() <= 0.0 {
                            bad = true;
                            break;
                        }
                        let e = green_lagrange(&f);
                        let sv = self.c2d * strain_voigt(&e);
                        let s = Matrix2::new(sv[0], sv[2], sv[2], sv[1]);
                        let w = geo.jw[q];

                        // Strain-displacement matrix rows (xx, zz, 2xz).
                        let mut bm = [[0.0f64; 8]; 3];
                        for a in 0..4 {
                            for i in 0..2 {
                                let col = 2 * a + i;
                                bm[0][col] = f[(i, 0)] * g[a][0];
                                bm[1][col] = f[(i, 1)] * g[a][1];
                                bm[2][col] = f[(i, 0)] * g[a][1] + f[(i, 1)] * g[a][0];
                            }
                        }
                        let fs = f * s;
                        for a in 0..4 {
                            fe[2 * a] += (fs[(0, 0)] * g[a][0] + fs[(0, 1)] * g[a][1]) * w;
                            fe[2 * a + 1] += (fs[(1, 0)] * g[a][0] + fs[(1, 1)] * g[a][1]) * w;
                        }
                        // Material part B^T C B, upper triangle.
                        for r in 0..8 {
                            let cb = [
                                self.c2d[(0, 0)] * bm[0][r]
                                    + self.c2d[(0, 1)] * bm[1][r]
                                    + self.c2d[(0, 2)] * bm[2][r],
                                self.c2d[(1, 0)] * bm[0][r]
                                    + self.c2d[(1, 1)] * bm[1][r]
                                    + self.c2d[(1, 2)] * bm[2][r],
                                self.c2d[(2, 0)] * bm[0][r]
                                    + self.c2d[(2, 1)] * bm[1][r]
                                    + self.c2d[(2, 2)] * bm[2][r],
                            ];
                            for c in r..8 {
                                ke[r][c] += (cb[0] * bm[0][c] + cb[1] * bm[1][c] + cb[2] * bm[2][c]) * w;
                            }
                        }
                        // Geometric part: delta_ik (grad N_a)^T S (grad N_b).
                        for a in 0..4 {
                            for b in a..4 {
                                let gsg = (g[a][0] * s[(0, 0)] + g[a][1] * s[(1, 0)]) * g[b][0]
                                    + (g[a][0] * s[(0, 1)] + g[a][1] * s[(1, 1)]) * g[b][1];
                                let v = gsg * w;
                                for i in 0..2 {
                                    let (r, c) = (2 * a + i, 2 * b + i);
                                    if r <= c {
                                        ke[r][c] += v;
                                    } else {
                                        ke[c][r] += v;
                                    }
                                }
                            }
                        }
                    }
                }
                StressModel::PulledBack => {
                    // No stored energy: tangent by central differences of the
                    // element force, then symmetrized.
                    match self.element_force(idx, &ue) {
                        Ok(f0) => {
                            fe = f0;
                            let eps = 1e-7 * self.mesh.geometry.length.max(1e-6);
                            let mut cols = [[0.0f64; 8]; 8];
                            for d in 0..8 {
                                let mut up = ue;
                                let mut dn = ue;
                                up[d] += eps;
                                dn[d] -= eps;
                                match (self.element_force(idx, &up), self.element_force(idx, &dn)) {
                                    (Ok(fp), Ok(fm)) => {
                                        for r in 0..8 {
                                            cols[d][r] = (fp[r] - fm[r]) / (2.0 * eps);
                                        }
                                    }
                                    _ => {
                                        bad = true;
                                        break;
                                    }
                                }
                            }
                            if !bad {
                                for r in 0..8 {
                                    for c in r..8 {
                                        ke[r][c] = 0.5 * (cols[c][r] + cols[r][c]);
                                    }
                                }
                            }
                        }
                        Err(_) => bad = true,
                    }
                }
            }

            if bad {
                inverted.push(idx);
                continue;
            }
            for a in 0..8 {
                let ga = 2 * el[a / 2] + (a % 2);
                force[ga] += fe[a];
                for b in a..8 {
                    let gb = 2 * el[b / 2] + (b % 2);
                    let v = ke[a][b];
                    if ga == gb {
                        tangent.add(ga, gb, v);
                    } else {
                        tangent.add(ga, gb, v);
                        tangent.add(gb, ga, v);
                    }
                }
            }
        }
        if !inverted.is_empty() {
            return Err(Error::ElementInversion { elements: inverted });
        }
        Ok(AssembledSystem {
            internal_force: force,
            tangent,
        })
    }

    /// Consistent mass matrix and gravity load vector. The gravity vector is
    /// the mass-weighted acceleration field (0, -g); its z-components sum to
    /// -rho l h g per unit width.
    pub fn assemble_mass_and_gravity(&self) -> (BandMatrix, Vec<f64>) {
        let n = self.dof_count();
        let hb = self.band_halfwidth;
        let mut mass = BandMatrix::zeros(n, hb, hb);
        let mut grav = vec![0.0; n];
        let rho = self.material.density;
        let g = self.material.gravity;
        for (idx, el) in self.mesh.elements.iter().enumerate() {
            let geo = &self.geo[idx];
            for a in 0..4 {
                grav[2 * el[a] + 1] -= rho * g * geo.n_int[a];
                for b in 0..4 {
                    let m = rho * geo.nn_int[a][b];
                    if el[a] <= el[b] {
                        for i in 0..2 {
                            let (r, c) = (2 * el[a] + i, 2 * el[b] + i);
                            mass.add(r, c, m);
                            if r != c {
                                mass.add(c, r, m);
                            }
                        }
                    }
                }
            }
        }
        (mass, grav)
    }

    /// Kinetic energy (1/2) v^T M v.
    pub fn kinetic_energy(&self, mass: &BandMatrix, v: &[f64]) -> f64 {
        let mut mv = vec![0.0; v.len()];
        mass.matvec(v, &mut mv);
        0.5 * v.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Gravitational potential relative to the reference configuration:
    /// -f_grav . u.
    pub fn gravity_potential(&self, grav: &[f64], state: &KinematicState) -> f64 {
        -grav.iter().zip(&state.u).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_strip_mesh, material_from_ratios, StripGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model() -> FemModel {
        let g = StripGeometry::new(1.0, 0.1, 1.0, 0.6).unwrap();
        let mesh = build_strip_mesh(g, 8, 2).unwrap();
        let mat = material_from_ratios(1e-3, 1.2e-1, 0.0, 1.0, 9.81).unwrap();
        // Override thickness bookkeeping: mesh geometry drives the shapes,
        // material only supplies E, nu, rho here.
        FemModel::new(mesh, mat, StressModel::StVenantKirchhoff).unwrap()
    }

    #[test]
    fn deformation_gradient_reference() {
        let m = small_model();
        let state = KinematicState::zeros(m.mesh.node_count());
        for q in 0..4 {
            let f = m.deformation_gradient(0, &state, q);
            assert!((f - Matrix2::identity()).norm() < 1e-15);
        }
    }

    #[test]
    fn deformation_gradient_affine() {
        let m = small_model();
        let a = Matrix2::new(1.1, 0.2, -0.05, 0.9);
        let mut state = KinematicState::zeros(m.mesh.node_count());
        for (n, p) in m.mesh.nodes.iter().enumerate() {
            let x = nalgebra::Vector2::new(p[0], p[1]);
            let u = a * x - x;
            state.u[2 * n] = u[0];
            state.u[2 * n + 1] = u[1];
        }
        for el in 0..m.mesh.elements.len() {
            for q in 0..4 {
                let f = m.deformation_gradient(el, &state, q);
                assert!((f - a).norm() < 1e-12, "element {el} gp {q}");
            }
        }
    }

    #[test]
    fn deformation_gradient_rotation() {
        let m = small_model();
        let th = 0.7f64;
        let r = Matrix2::new(th.cos(), -th.sin(), th.sin(), th.cos());
        let mut state = KinematicState::zeros(m.mesh.node_count());
        for (n, p) in m.mesh.nodes.iter().enumerate() {
            let x = nalgebra::Vector2::new(p[0], p[1]);
            let u = r * x - x;
            state.u[2 * n] = u[0];
            state.u[2 * n + 1] = u[1];
        }
        let f = m.deformation_gradient(3, &state, 1);
        assert!((f - r).norm() < 1e-12);
        // Frame indifference: E = 0, so internal forces vanish.
        let e = green_lagrange(&f);
        assert!(e.norm() < 1e-12);
        let force = m.internal_force(&state).unwrap();
        let scale = m.material.youngs_modulus * m.material.thickness;
        let norm = force.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 1e-8 * scale, "rotation force norm {norm:.3e}");
    }

    #[test]
    fn green_lagrange_examples() {
        assert!(green_lagrange(&Matrix2::identity()).norm() < 1e-16);
        let e = green_lagrange(&Matrix2::new(2.0, 0.0, 0.0, 1.0));
        assert!((e[(0, 0)] - 1.5).abs() < 1e-15);
        assert!(e[(1, 1)].abs() < 1e-15);
        assert!(e[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn pk2_examples() {
        let c = elasticity_matrix_2d(200.0, 0.0).unwrap();
        let s = pk2_stress(&Matrix2::zeros(), &c);
        assert!(s.norm() == 0.0);
        // Uniaxial small strain, nu = 0: S ~ E * eps.
        let eps = 1e-6;
        let s = pk2_stress(&Matrix2::new(eps, 0.0, 0.0, 0.0), &c);
        assert!((s[(0, 0)] - 200.0 * eps).abs() < 1e-12);
        assert!(s[(1, 1)].abs() < 1e-15);
    }

    #[test]
    fn pk2_energy_derivative_oracle() {
        // S : dE must equal the directional derivative of (1/2) E : C : E.
        let c = elasticity_matrix_2d(37.0, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let sym = |rng: &mut ChaCha8Rng| {
                let a: f64 = rng.gen_range(-0.1..0.1);
                let b: f64 = rng.gen_range(-0.1..0.1);
                let d: f64 = rng.gen_range(-0.1..0.1);
                Matrix2::new(a, b, b, d)
            };
            let e0 = sym(&mut rng);
            let de = sym(&mut rng);
            let s = pk2_stress(&e0, &c);
            let s_dot_de = (s.transpose() * de).trace();
            let energy = |e: &Matrix2<f64>| {
                let v = strain_voigt(e);
                0.5 * v.dot(&(c * v))
            };
            let h = 1e-7;
            let fd = (energy(&(e0 + de * h)) - energy(&(e0 - de * h))) / (2.0 * h);
            assert!(
                (s_dot_de - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "{s_dot_de} vs {fd}"
            );
        }
    }

    #[test]
    fn internal_force_zero_at_reference() {
        let m = small_model();
        let state = KinematicState::zeros(m.mesh.node_count());
        let f = m.internal_force(&state).unwrap();
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn translation_invariance() {
        let m = small_model();
        let mut state = KinematicState::zeros(m.mesh.node_count());
        for n in 0..m.mesh.node_count() {
            state.u[2 * n] = 0.37;
            state.u[2 * n + 1] = -1.2;
        }
        let f = m.internal_force(&state).unwrap();
        let scale = m.material.youngs_modulus * m.material.thickness;
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 1e-10 * scale);
    }

    fn random_state(m: &FemModel, rng: &mut ChaCha8Rng, amp: f64) -> KinematicState {
        let mut state = KinematicState::zeros(m.mesh.node_count());
        for x in state.u.iter_mut() {
            *x = rng.gen_range(-amp..amp);
        }
        state
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let l = m.mesh.geometry.length;
        let eps = 1e-6 * l;
        for trial in 0..20 {
            let state = random_state(&m, &mut rng, 0.01 * l);
            let sys = m.assemble_internal_and_tangent(&state).unwrap();
            let n = m.dof_count();
            let mut delta = vec![0.0; n];
            for d in delta.iter_mut() {
                *d = rng.gen_range(-1.0..1.0);
            }
            let norm = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
            delta.iter_mut().for_each(|d| *d /= norm);

            let mut kd = vec![0.0; n];
            sys.tangent.matvec(&delta, &mut kd);

            let mut up = state.clone();
            let mut dn = state.clone();
            for i in 0..n {
                up.u[i] += eps * delta[i];
                dn.u[i] -= eps * delta[i];
            }
            let fp = m.internal_force(&up).unwrap();
            let fm = m.internal_force(&dn).unwrap();
            let mut err = 0.0f64;
            let mut kd_norm = 0.0f64;
            for i in 0..n {
                let fd = (fp[i] - fm[i]) / (2.0 * eps);
                err += (kd[i] - fd) * (kd[i] - fd);
                kd_norm += kd[i] * kd[i];
            }
            let rel = err.sqrt() / kd_norm.sqrt();
            assert!(rel <= 1e-4, "trial {trial}: tangent FD mismatch {rel:.3e}");
        }
    }

    #[test]
    fn force_is_energy_gradient() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let l = m.mesh.geometry.length;
        let eps = 1e-6 * l;
        for _ in 0..10 {
            let state = random_state(&m, &mut rng, 0.01 * l);
            let f = m.internal_force(&state).unwrap();
            let n = m.dof_count();
            let mut delta = vec![0.0; n];
            for d in delta.iter_mut() {
                *d = rng.gen_range(-1.0..1.0);
            }
            let f_dot_d: f64 = f.iter().zip(&delta).map(|(a, b)| a * b).sum();
            let mut up = state.clone();
            let mut dn = state.clone();
            for i in 0..n {
                up.u[i] += eps * delta[i];
                dn.u[i] -= eps * delta[i];
            }
            let fd = (m.strain_energy(&up).unwrap() - m.strain_energy(&dn).unwrap()) / (2.0 * eps);
            assert!(
                (f_dot_d - fd).abs() <= 1e-5 * (1.0 + fd.abs().max(f_dot_d.abs())),
                "{f_dot_d} vs {fd}"
            );
        }
    }

    #[test]
    fn tangent_exactly_symmetric() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let state = random_state(&m, &mut rng, 0.02);
        let sys = m.assemble_internal_and_tangent(&state).unwrap();
        assert_eq!(sys.tangent.max_asymmetry(), 0.0);
    }

    #[test]
    fn mass_and_gravity_totals() {
        let m = small_model();
        let (mass, grav) = m.assemble_mass_and_gravity();
        let geo = m.mesh.geometry;
        let weight = m.material.density * geo.length * geo.thickness * m.material.gravity;
        let total_z: f64 = grav.iter().skip(1).step_by(2).sum();
        let total_x: f64 = grav.iter().step_by(2).sum();
        assert!((total_z + weight).abs() <= 1e-10 * weight);
        assert!(total_x.abs() <= 1e-14 * weight);

        // Rigid-translation mass: 1^T M 1 per component = rho * area.
        let n = m.dof_count();
        let ones_x: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let mut mv = vec![0.0; n];
        mass.matvec(&ones_x, &mut mv);
        let total_mass: f64 = ones_x.iter().zip(&mv).map(|(a, b)| a * b).sum();
        let expected = m.material.density * geo.length * geo.thickness;
        assert!((total_mass - expected).abs() <= 1e-10 * expected);

        // Positive definiteness on a random vector.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        mass.matvec(&x, &mut mv);
        let xtmx: f64 = x.iter().zip(&mv).map(|(a, b)| a * b).sum();
        assert!(xtmx > 0.0);
    }

    #[test]
    fn element_inversion_diagnostic() {
        let m = small_model();
        let mut state = KinematicState::zeros(m.mesh.node_count());
        // Collapse one element by pushing a node across it.
        let el = m.mesh.elements[0];
        let width = m.mesh.geometry.length / m.mesh.nx as f64;
        state.u[2 * el[1]] = -2.0 * width;
        match m.internal_force(&state) {
            Err(Error::ElementInversion { elements }) => assert!(elements.contains(&0)),
            other => panic!("expected inversion, got {other:?}"),
        }
    }

    #[test]
    fn pulled_back_variant_differs_and_is_consistent() {
        let g = StripGeometry::new(1.0, 0.1, 1.0, 0.6).unwrap();
        let mesh = build_strip_mesh(g, 6, 1).unwrap();
        let mat = material_from_ratios(1e-3, 1.2e-1, 0.2, 1.0, 9.81).unwrap();
        let alt = FemModel::new(mesh, mat, StressModel::PulledBack).unwrap();

        let f = Matrix2::new(1.4, 0.1, 0.0, 0.8);
        let e = green_lagrange(&f);
        let s_std = pk2_stress(&e, alt.elasticity_2d());
        let s_alt = pk2_pulled_back(&f, &e, alt.elasticity_2d());
        assert!((s_std - s_alt).norm() > 1e-3 * s_std.norm());
        assert!((s_alt - s_alt.transpose()).norm() < 1e-12 * s_alt.norm());

        // The true Jacobian of this non-variational force is not symmetric;
        // the symmetrized FD tangent only needs to be a usable Newton
        // matrix, so the agreement bound is loose (asymmetry is O(strain)).
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let state = random_state(&alt, &mut rng, 0.005);
        let sys = alt.assemble_internal_and_tangent(&state).unwrap();
        let n = alt.dof_count();
        let mut delta = vec![0.0; n];
        for d in delta.iter_mut() {
            *d = rng.gen_range(-1.0..1.0);
        }
        let eps = 1e-6;
        let mut up = state.clone();
        let mut dn = state.clone();
        for i in 0..n {
            up.u[i] += eps * delta[i];
            dn.u[i] -= eps * delta[i];
        }
        let fp = alt.internal_force(&up).unwrap();
        let fm = alt.internal_force(&dn).unwrap();
        let mut kd = vec![0.0; n];
        sys.tangent.matvec(&delta, &mut kd);
        let mut err = 0.0;
        let mut nrm = 0.0;
        for i in 0..n {
            let fd = (fp[i] - fm[i]) / (2.0 * eps);
            err += (kd[i] - fd) * (kd[i] - fd);
            nrm += fd * fd;
        }
        assert!(err.sqrt() <= 0.05 * nrm.sqrt().max(1e-30));
    }
}
