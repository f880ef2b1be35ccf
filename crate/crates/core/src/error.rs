use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),

    #[error("Poisson ratio {0} >= 0.5: incompressible limit, elasticity matrix singular")]
    Incompressible(f64),

    #[error("mesh resolution too coarse: {0}")]
    Resolution(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("constraint conflict: DOF {dof} prescribed twice")]
    ConstraintConflict { dof: usize },

    #[error("element inversion (det F <= 0) in elements {elements:?}")]
    ElementInversion { elements: Vec<usize> },

    #[error("static solve did not converge: {residual:.3e} > {tolerance:.3e} after {iterations} iterations")]
    NonConvergence {
        residual: f64,
        tolerance: f64,
        iterations: usize,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("eigenvalue solver failed: {0}")]
    Eigen(String),

    #[error("invalid critical-point bracket: {0}")]
    Bracketing(String),

    #[error("initial state is not statically stable (mu_min = {mu_min:.3e})")]
    InitialUnstable { mu_min: f64 },

    #[error("dynamic integration did not settle within {steps} steps (kinetic energy {kinetic:.3e})")]
    SettleTimeout { steps: usize, kinetic: f64 },

    #[error("path generator stuck at pose ({x:.4}, {z:.4}, {theta:.4}): {reason}")]
    GeneratorStuck {
        x: f64,
        z: f64,
        theta: f64,
        reason: String,
    },

    #[error("folded-state planning failed: {0}")]
    Planning(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed input file {path}: {reason}")]
    Parse { path: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
