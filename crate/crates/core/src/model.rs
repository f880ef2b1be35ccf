//! Strip geometry, material parametrization, and mesh construction.
//!
//! The strip is an l x h cross-section (per unit width b) in the (x, z)
//! plane, with the coordinate origin in the middle of the reference
//! configuration. Fabric materials are specified through the
//! weight-to-stiffness ratios
//!
//!   eta_m = (1 - nu^2) rho / (h E),     eta_b = 12 (1 - nu^2) rho / (h^3 E),
//!
//! from which an effective thickness h and Young's modulus E are derived.
//! After this mapping h no longer represents the physical fabric thickness;
//! it is a modeling thickness that reproduces the prescribed membrane and
//! bending stiffness-to-weight ratios.

use crate::error::{Error, Result};
use nalgebra::{Matrix3, Matrix6};

/// Reference-configuration dimensions of the strip.
#[derive(Debug, Clone, Copy)]
pub struct StripGeometry {
    /// Length along x, meters.
    pub length: f64,
    /// Effective thickness along z, meters.
    pub thickness: f64,
    /// Width, meters. Bookkeeping only: the 2D model is per unit width.
    pub width: f64,
    /// Folding line position measured from the hold end, in [l/2, l).
    pub folding_line: f64,
}

impl StripGeometry {
    pub fn new(length: f64, thickness: f64, width: f64, folding_line: f64) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Geometry(format!("length must be positive, got {length}")));
        }
        if !(thickness > 0.0) || thickness >= length {
            return Err(Error::Geometry(format!(
                "thickness must satisfy 0 < h < l, got h={thickness}, l={length}"
            )));
        }
        if !(width > 0.0) {
            return Err(Error::Geometry(format!("width must be positive, got {width}")));
        }
        if !(folding_line > 0.0 && folding_line < length) {
            return Err(Error::Geometry(format!(
                "folding line must lie inside (0, l), got {folding_line}"
            )));
        }
        // The folded free end (length l - x_f) must land on the supported
        // region [0, x_f], which requires x_f >= l/2.
        if folding_line < length / 2.0 {
            return Err(Error::Geometry(format!(
                "folding line {folding_line} < l/2 = {}: folded part would overhang the hold end",
                length / 2.0
            )));
        }
        Ok(Self {
            length,
            thickness,
            width,
            folding_line,
        })
    }

    /// Fold line in the mid-origin model frame.
    pub fn folding_line_mid(&self) -> f64 {
        self.folding_line - self.length / 2.0
    }

    /// Convert a coordinate measured from the hold end (x in [0, l]) to the
    /// mid-origin model frame.
    pub fn hold_end_to_mid(&self, x: f64) -> f64 {
        x - self.length / 2.0
    }
}

/// Constitutive constants plus the ratio parametrization they were derived
/// from.
#[derive(Debug, Clone, Copy)]
pub struct MaterialParams {
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Poisson's ratio.
    pub poissons_ratio: f64,
    /// Density, kg/m^3.
    pub density: f64,
    /// Weight-to-membrane-stiffness ratio.
    pub eta_m: f64,
    /// Weight-to-bending-stiffness ratio.
    pub eta_b: f64,
    /// Effective thickness consistent with the ratios, meters.
    pub thickness: f64,
    /// Gravity magnitude, m/s^2 (acts in -z).
    pub gravity: f64,
}

/// Derive (h, E) from the weight-to-stiffness ratios.
///
/// Inverts
///   eta_m = (1 - nu^2) rho / (h E),  eta_b = 12 (1 - nu^2) rho / (h^3 E)
/// to
///   h = sqrt(12 eta_m / eta_b),      E = (1 - nu^2) rho / (h eta_m).
pub fn material_from_ratios(
    eta_m: f64,
    eta_b: f64,
    nu: f64,
    rho: f64,
    gravity: f64,
) -> Result<MaterialParams> {
    for (name, v) in [("eta_m", eta_m), ("eta_b", eta_b), ("rho", rho), ("g", gravity)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::ParamDomain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(0.0..0.5).contains(&nu) {
        if nu >= 0.5 {
            return Err(Error::Incompressible(nu));
        }
        return Err(Error::ParamDomain(format!("nu must lie in [0, 0.5), got {nu}")));
    }
    let h = (12.0 * eta_m / eta_b).sqrt();
    let e = (1.0 - nu * nu) * rho / (h * eta_m);
    Ok(MaterialParams {
        youngs_modulus: e,
        poissons_ratio: nu,
        density: rho,
        eta_m,
        eta_b,
        thickness: h,
        gravity,
    })
}

impl MaterialParams {
    /// Re-derive the ratios from (E, h, nu, rho); inverse of
    /// [`material_from_ratios`].
    pub fn ratios(&self) -> (f64, f64) {
        let f = (1.0 - self.poissons_ratio * self.poissons_ratio) * self.density
            / (self.thickness * self.youngs_modulus);
        (f, 12.0 * f / (self.thickness * self.thickness))
    }

    /// Weight of the strip per unit width, N/m: rho * l * h * g.
    pub fn weight_per_width(&self, length: f64) -> f64 {
        self.density * length * self.thickness * self.gravity
    }
}

/// Full 6x6 isotropic elasticity matrix in Voigt notation
/// (xx, yy, zz, yz, xz, xy), including the E/((1+nu)(1-2nu)) prefactor.
pub fn elasticity_matrix(e: f64, nu: f64) -> Result<Matrix6<f64>> {
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::ParamDomain(format!("E must be positive, got {e}")));
    }
    if nu >= 0.5 {
        return Err(Error::Incompressible(nu));
    }
    if nu < 0.0 {
        return Err(Error::ParamDomain(format!("nu must lie in [0, 0.5), got {nu}")));
    }
    let pre = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let n = 1.0 - nu;
    let s = (1.0 - 2.0 * nu) / 2.0;
    let mut d = Matrix6::zeros();
    for i in 0..3 {
        for j in 0..3 {
            d[(i, j)] = if i == j { n } else { nu };
        }
        d[(i + 3, i + 3)] = s;
    }
    Ok(d * pre)
}

/// In-plane (x, z) sub-matrix of the Voigt elasticity matrix, acting on
/// strain (E_xx, E_zz, 2 E_xz). Rows/cols (xx, zz, xz) of the 6x6 matrix.
pub fn elasticity_matrix_2d(e: f64, nu: f64) -> Result<Matrix3<f64>> {
    let c = elasticity_matrix(e, nu)?;
    let idx = [0usize, 2, 4];
    let mut m = Matrix3::zeros();
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            m[(a, b)] = c[(i, j)];
        }
    }
    Ok(m)
}

/// Regular quadrilateral discretization of the strip cross-section.
///
/// Nodes form an (nx+1) x (nz+1) grid over [-l/2, l/2] x [-h/2, h/2],
/// numbered column-major: node(i, j) = i * (nz + 1) + j with i along the
/// length and j through the thickness. Column-major numbering keeps the
/// assembled bandwidth at 2 (nz + 2) - 1.
#[derive(Debug, Clone)]
pub struct StripMesh {
    pub geometry: StripGeometry,
    pub nx: usize,
    pub nz: usize,
    /// Reference coordinates (x, z) per node.
    pub nodes: Vec<[f64; 2]>,
    /// 4-node quad connectivity, counter-clockwise in the (x, z) plane.
    pub elements: Vec<[usize; 4]>,
    /// Nodes on the bottom surface z = -h/2 (contact candidates), ascending x.
    pub bottom_nodes: Vec<usize>,
    /// Nodes on the grasped edge x = +l/2, ascending z.
    pub grasped_nodes: Vec<usize>,
    /// Bottom node at the hold end x = -l/2.
    pub holding_node: usize,
    /// Mid-surface node closest to the material midpoint (0, 0).
    pub midpoint_node: usize,
}

/// Build the regular strip mesh. Requires nx >= 4 and nz >= 1.
pub fn build_strip_mesh(geometry: StripGeometry, nx: usize, nz: usize) -> Result<StripMesh> {
    if nx < 4 {
        return Err(Error::Resolution(format!("nx = {nx} < 4")));
    }
    if nz < 1 {
        return Err(Error::Resolution(format!("nz = {nz} < 1")));
    }
    let l = geometry.length;
    let h = geometry.thickness;
    let ncols = nx + 1;
    let nrows = nz + 1;
    let node = |i: usize, j: usize| i * nrows + j;

    let mut nodes = Vec::with_capacity(ncols * nrows);
    for i in 0..ncols {
        let x = -l / 2.0 + l * (i as f64) / (nx as f64);
        for j in 0..nrows {
            let z = -h / 2.0 + h * (j as f64) / (nz as f64);
            nodes.push([x, z]);
        }
    }

    let mut elements = Vec::with_capacity(nx * nz);
    for i in 0..nx {
        for j in 0..nz {
            elements.push([node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)]);
        }
    }

    let bottom_nodes = (0..ncols).map(|i| node(i, 0)).collect();
    let grasped_nodes = (0..nrows).map(|j| node(nx, j)).collect();
    let midpoint_node = node(nx / 2, nz / 2);

    Ok(StripMesh {
        geometry,
        nx,
        nz,
        nodes,
        elements,
        bottom_nodes,
        grasped_nodes,
        holding_node: node(0, 0),
        midpoint_node,
    })
}

impl StripMesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dof_count(&self) -> usize {
        2 * self.nodes.len()
    }

    /// Reference x of a node, in the mid-origin frame.
    pub fn ref_x(&self, node: usize) -> f64 {
        self.nodes[node][0]
    }

    /// True if the node's material position lies beyond the fold line
    /// (grasped side).
    pub fn is_grasp_side(&self, node: usize) -> bool {
        self.nodes[node][0] > self.geometry.folding_line_mid()
    }

    /// Tributary length of a bottom-surface node along the contact edge.
    pub fn bottom_tributary(&self, node: usize) -> f64 {
        let dx = self.geometry.length / self.nx as f64;
        let i = node / (self.nz + 1);
        if i == 0 || i == self.nx {
            dx / 2.0
        } else {
            dx
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ratio_inversion_examples() {
        let m = material_from_ratios(1e-3, 1.2e-2, 0.0, 1.0, 9.81).unwrap();
        assert!((m.thickness - 1.0).abs() < 1e-14);
        assert!((m.youngs_modulus - 1000.0).abs() < 1e-10);

        let m = material_from_ratios(1e-3, 1.2, 0.0, 0.1, 9.81).unwrap();
        assert!((m.thickness - 0.1).abs() < 1e-15);
        assert!((m.youngs_modulus - 1000.0).abs() < 1e-10);
    }

    #[test]
    fn zero_nu_factor_is_exact() {
        let m = material_from_ratios(2e-3, 0.5, 0.0, 0.7, 9.81).unwrap();
        // With nu = 0 the (1 - nu^2) factor is exactly 1.
        let expected = m.density / (m.thickness * m.eta_m);
        assert_eq!(m.youngs_modulus, expected);
    }

    #[test]
    fn ratio_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let eta_m = 10f64.powf(rng.gen_range(-5.0..-1.0));
            let eta_b = 10f64.powf(rng.gen_range(-2.0..4.0));
            let nu = rng.gen_range(0.0..0.49);
            let rho = 10f64.powf(rng.gen_range(-2.0..2.0));
            let m = material_from_ratios(eta_m, eta_b, nu, rho, 9.81).unwrap();
            let (em, eb) = m.ratios();
            assert!((em - eta_m).abs() <= 1e-12 * eta_m, "eta_m {em} vs {eta_m}");
            assert!((eb - eta_b).abs() <= 1e-12 * eta_b, "eta_b {eb} vs {eta_b}");
        }
    }

    #[test]
    fn ratio_domain_errors() {
        assert!(matches!(
            material_from_ratios(-1.0, 1.0, 0.0, 1.0, 9.81),
            Err(Error::ParamDomain(_))
        ));
        assert!(matches!(
            material_from_ratios(1e-3, 1.0, 0.5, 1.0, 9.81),
            Err(Error::Incompressible(_))
        ));
        assert!(matches!(
            material_from_ratios(1e-3, 0.0, 0.0, 1.0, 9.81),
            Err(Error::ParamDomain(_))
        ));
    }

    #[test]
    fn elasticity_matrix_nu_zero() {
        let c = elasticity_matrix(7.0, 0.0).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i != j {
                    0.0
                } else if i < 3 {
                    7.0
                } else {
                    3.5
                };
                assert!((c[(i, j)] - expected).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn elasticity_matrix_nu_03() {
        let c = elasticity_matrix(1.0, 0.3).unwrap();
        let denom = 1.3 * 0.4;
        assert!((c[(0, 0)] - 0.7 / denom).abs() < 1e-14);
        assert!((c[(0, 1)] - 0.3 / denom).abs() < 1e-14);
        assert!((c[(3, 3)] - 0.2 / denom).abs() < 1e-14);
    }

    #[test]
    fn elasticity_matrix_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let e = 10f64.powf(rng.gen_range(0.0..8.0));
            let nu = rng.gen_range(0.0..0.49);
            let c = elasticity_matrix(e, nu).unwrap();
            assert_eq!(c, c.transpose());
            let eig = c.symmetric_eigenvalues();
            assert!(eig.min() > 0.0, "not SPD at nu={nu}");
        }
        assert!(matches!(elasticity_matrix(1.0, 0.5), Err(Error::Incompressible(_))));
    }

    #[test]
    fn elasticity_2d_submatrix() {
        let c = elasticity_matrix_2d(1.0, 0.3).unwrap();
        let full = elasticity_matrix(1.0, 0.3).unwrap();
        assert_eq!(c[(0, 0)], full[(0, 0)]);
        assert_eq!(c[(0, 1)], full[(0, 2)]);
        assert_eq!(c[(2, 2)], full[(4, 4)]);
    }

    #[test]
    fn mesh_counts_small() {
        let g = StripGeometry::new(1.0, 0.01, 1.0, 0.6).unwrap();
        let mesh = build_strip_mesh(g, 4, 1).unwrap();
        assert_eq!(mesh.node_count(), 10);
        assert_eq!(mesh.elements.len(), 4);
        assert_eq!(mesh.grasped_nodes.len(), 2);
        for &n in &mesh.grasped_nodes {
            assert!((mesh.nodes[n][0] - 0.5).abs() < 1e-15);
        }
        assert_eq!(mesh.holding_node, 0);
        assert!((mesh.nodes[0][0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn mesh_positive_jacobians() {
        let g = StripGeometry::new(0.3, 0.02, 1.0, 0.16).unwrap();
        let mesh = build_strip_mesh(g, 120, 4).unwrap();
        assert_eq!(mesh.node_count(), 605);
        // Regular grid: counter-clockwise quads have positive area.
        for el in &mesh.elements {
            let p = |k: usize| mesh.nodes[el[k]];
            let area = 0.5
                * ((p(1)[0] - p(0)[0]) * (p(2)[1] - p(0)[1])
                    - (p(2)[0] - p(0)[0]) * (p(1)[1] - p(0)[1]));
            assert!(area > 0.0);
        }
    }

    #[test]
    fn mesh_rejects_bad_inputs() {
        assert!(StripGeometry::new(0.0, 0.01, 1.0, 0.1).is_err());
        assert!(StripGeometry::new(1.0, 0.01, 1.0, 0.4).is_err()); // x_f < l/2
        let g = StripGeometry::new(1.0, 0.01, 1.0, 0.6).unwrap();
        assert!(matches!(build_strip_mesh(g, 3, 1), Err(Error::Resolution(_))));
        assert!(matches!(build_strip_mesh(g, 4, 0), Err(Error::Resolution(_))));
    }

    #[test]
    fn mesh_is_deterministic() {
        let g = StripGeometry::new(0.3, 0.01, 1.0, 0.165).unwrap();
        let a = build_strip_mesh(g, 30, 2).unwrap();
        let b = build_strip_mesh(g, 30, 2).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.elements, b.elements);
        assert_eq!(a.midpoint_node, b.midpoint_node);
    }
}
