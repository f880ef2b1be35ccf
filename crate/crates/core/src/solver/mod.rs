//! Static Newton solver, smallest-eigenvalue monitor, and implicit dynamic
//! integrator.

pub mod dynamic;
pub mod eigen;
pub mod static_solve;

pub use dynamic::{integrate_dynamic, total_energy, DynamicOptions, DynamicOutcome, NewContact};
pub use eigen::{smallest_eigenvalue, EigenOptions, EigenReport};
pub use static_solve::{solve_static, FrictionTerm, NewtonOptions, StaticReport};
