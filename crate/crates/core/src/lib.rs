//! Quasi-static stability analysis of fabric strip folding.
//!
//! A 2D total-Lagrangian finite-element model of a fabric strip (St. Venant-
//! Kirchhoff material, bilinear quads) with frictionless ground contact, a
//! holding point, and a rigidly grasped edge driven along a folding path.
//! Equilibrium paths are traced by continuation in the path parameter; loss
//! of static stability is detected through the smallest eigenvalue of the
//! reduced tangent stiffness, snap-through is traced by an implicit dynamic
//! solver, and folding paths (triangular, circular, R) are assessed against
//! the planned folded state.

pub mod band;
pub mod constraints;
pub mod error;
pub mod fem;
pub mod model;
pub mod continuation;
pub mod paths;
pub mod scenario;
pub mod solver;
pub mod system;

pub use error::{Error, Result};
