//! Scenario configuration and assembly.
//!
//! Scenarios are described by a strict-schema TOML file (unknown keys are
//! rejected) with SI units throughout; lengths are meters, angles radians.
//! Path and fold coordinates in the config use the hold-end frame
//! x in [0, l] and are converted to the model's mid-origin frame when the
//! system is built. Every run embeds the fully resolved config (defaults
//! expanded) in its manifest, so a config file plus the artifact version
//! pins the outputs exactly.

use crate::constraints::GroundContact;
use crate::continuation::{
    ContinuationOptions, DeflectionMetric, FrictionSettings, OnCritical, Tracer,
};
use crate::error::{Error, Result};
use crate::fem::{KinematicState, StressModel};
use crate::model::{build_strip_mesh, material_from_ratios, MaterialParams, StripGeometry};
use crate::solver::{DynamicOptions, EigenOptions, NewtonOptions};
use crate::system::StripSystem;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    /// Strip length, m.
    pub l: f64,
    /// Width, m (bookkeeping; the model is per unit width).
    pub b: f64,
    /// Folding line, hold-end coordinates, m.
    pub x_f: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            l: 0.3,
            b: 1.0,
            x_f: 0.165,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    pub eta_m: f64,
    pub eta_b: f64,
    pub nu: f64,
    pub rho: f64,
    pub g: f64,
    pub stress_model: StressModel,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        Self {
            eta_m: 1e-3,
            eta_b: 150.0,
            nu: 0.0,
            rho: 1.0,
            g: 9.81,
            stress_model: StressModel::StVenantKirchhoff,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub nz: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { nx: 96, nz: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConstraintConfig {
    pub ground: bool,
    pub hold: bool,
    pub grasp: bool,
    /// Contact penalty k_c = factor * E / h per unit area.
    pub contact_stiffness_factor: f64,
    /// Ground plane height, m; omitted = bottom surface at rest (-h/2).
    pub ground_z_meters: Option<f64>,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            ground: true,
            hold: true,
            grasp: true,
            contact_stiffness_factor: 1e4,
            ground_z_meters: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StaticConfig {
    pub max_iterations: usize,
    /// Residual tolerance relative to the total weight.
    pub tolerance_rel_weight: f64,
    pub max_backtracks: usize,
    pub max_set_updates: usize,
}

impl Default for StaticConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance_rel_weight: 1e-8,
            max_backtracks: 10,
            max_set_updates: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EigenConfig {
    pub tol_rel: f64,
    pub max_bisections: usize,
    pub max_inverse_iterations: usize,
}

impl Default for EigenConfig {
    fn default() -> Self {
        let d = EigenOptions::default();
        Self {
            tol_rel: d.tol_rel,
            max_bisections: d.max_bisections,
            max_inverse_iterations: d.max_inverse_iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicConfig {
    pub dt: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_m: f64,
    pub settle_energy_rel: f64,
    pub settle_steps: usize,
    pub max_steps: usize,
    pub sample_stride: usize,
    pub handoff_after_touch: bool,
    pub handoff_tol_rel: f64,
    pub min_steps: usize,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        let d = DynamicOptions::default();
        Self {
            dt: d.dt,
            beta: d.beta,
            gamma: d.gamma,
            alpha_m: d.alpha_m,
            settle_energy_rel: d.settle_energy_rel,
            settle_steps: d.settle_steps,
            max_steps: d.max_steps,
            sample_stride: d.sample_stride,
            handoff_after_touch: d.handoff_after_touch,
            handoff_tol_rel: d.handoff_tol_rel,
            min_steps: d.min_steps,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub d_lambda: f64,
    pub d_lambda_min: f64,
    pub growth: f64,
    pub eps_stab_rel: f64,
    pub classify_rel: f64,
    /// Bracket tolerance in meters of gripper travel (default 1e-3 l).
    pub locate_tol_meters: Option<f64>,
    pub on_critical: OnCritical,
    pub max_steps: usize,
    pub snapshot_stride: usize,
    pub kick_amplitude_rel: f64,
    pub deflection_metric: DeflectionMetric,
    /// Branch-jump detector thresholds (see the tracer).
    pub jump_abs_rel: f64,
    pub jump_rel_factor: f64,
    /// Exit-code contract: instability events make the run exit 2 when the
    /// scenario expects stability.
    pub expect_stable: bool,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            d_lambda: 5e-3,
            d_lambda_min: 1e-5,
            growth: 1.5,
            eps_stab_rel: 1e-6,
            classify_rel: 1e-3,
            locate_tol_meters: None,
            on_critical: OnCritical::DynamicHandoff,
            max_steps: 20_000,
            snapshot_stride: 10,
            kick_amplitude_rel: 1e-3,
            deflection_metric: DeflectionMetric::MidpointNorm,
            jump_abs_rel: 0.05,
            jump_rel_factor: 25.0,
            expect_stable: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FrictionConfig {
    pub enabled: bool,
    pub target_ratio: f64,
    pub cap_ratio: f64,
}

impl Default for FrictionConfig {
    fn default() -> Self {
        let d = FrictionSettings::default();
        Self {
            enabled: d.enabled,
            target_ratio: d.target_ratio,
            cap_ratio: d.cap_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathGenerator {
    Triangular,
    Circular,
    R,
    XTranslate,
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub generator: PathGenerator,
    /// Path file to replay when generator = "file".
    pub file: Option<String>,
    /// Waypoint densification per unit arc length fraction.
    pub waypoints: usize,
    /// x-translate experiment: gripper height, m.
    pub z_meters: f64,
    /// x-translate: start/end x in hold-end coordinates, m. Defaults:
    /// start = l/2 + l/2 - 1.25 z (slack lead-in), end = 0.1 l.
    pub x_start_meters: Option<f64>,
    pub x_end_meters: Option<f64>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            generator: PathGenerator::Triangular,
            file: None,
            waypoints: 200,
            z_meters: 0.09,
            x_start_meters: None,
            x_end_meters: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RPathConfig {
    /// Greedy pose step relative to l.
    pub step_rel: f64,
    pub fan_count: usize,
    pub fan_half_angle_deg: f64,
    /// Stability margin for candidate selection, relative to mu_min(0).
    pub eps_stab_rel: f64,
    /// Contact-boundary tolerance around x_f, relative to l.
    pub boundary_tol_rel: f64,
    pub max_steps: usize,
}

impl Default for RPathConfig {
    fn default() -> Self {
        Self {
            step_rel: 0.012,
            fan_count: 7,
            fan_half_angle_deg: 60.0,
            eps_stab_rel: 1e-6,
            boundary_tol_rel: 0.02,
            max_steps: 1200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub eta_b: Vec<f64>,
    /// Gripper heights, m.
    pub z_meters: Vec<f64>,
    /// Shared x-range, hold-end coordinates; defaults derived from max z.
    pub x_start_meters: Option<f64>,
    pub x_end_meters: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eta_b: vec![50.0, 150.0, 500.0],
            z_meters: vec![0.06, 0.09, 0.12],
            x_start_meters: None,
            x_end_meters: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct AssessConfig {
    pub paths: Vec<PathGenerator>,
    pub friction_triangular: bool,
    pub friction_circular: bool,
    pub friction_r: bool,
}

impl Default for AssessConfig {
    fn default() -> Self {
        Self {
            paths: vec![
                PathGenerator::Triangular,
                PathGenerator::Circular,
                PathGenerator::R,
            ],
            friction_triangular: false,
            friction_circular: false,
            friction_r: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub svg: bool,
    pub emit_snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            svg: true,
            emit_snapshots: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Reserved for randomized test utilities; the solvers are
    /// deterministic and ignore it.
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    pub mesh: MeshConfig,
    pub constraints: ConstraintConfig,
    #[serde(rename = "static")]
    pub static_solver: StaticConfig,
    pub eigen: EigenConfig,
    pub dynamic: DynamicConfig,
    pub continuation: ContinuationConfig,
    pub friction: FrictionConfig,
    pub path: PathConfig,
    pub rpath: RPathConfig,
    pub sweep: SweepConfig,
    pub assess: AssessConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml_str(&text)
    }

    /// Canonical resolved form (defaults expanded), embedded in manifests.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// A built scenario: the assembled system plus solver options.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub system: StripSystem,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Scenario> {
        let m = &config.material;
        let material: MaterialParams =
            material_from_ratios(m.eta_m, m.eta_b, m.nu, m.rho, m.g)?;
        let geometry = StripGeometry::new(
            config.geometry.l,
            material.thickness,
            config.geometry.b,
            config.geometry.x_f,
        )?;
        let mesh = build_strip_mesh(geometry, config.mesh.nx, config.mesh.nz)?;
        let ground = config.constraints.ground.then(|| GroundContact {
            plane_z: config
                .constraints
                .ground_z_meters
                .unwrap_or(-material.thickness / 2.0),
            stiffness: config.constraints.contact_stiffness_factor * material.youngs_modulus
                / material.thickness,
        });
        let system = StripSystem::new(
            mesh,
            material,
            m.stress_model,
            ground,
            config.constraints.hold,
            config.constraints.grasp,
        )?;
        Ok(Scenario { config, system })
    }

    pub fn length(&self) -> f64 {
        self.system.mesh().geometry.length
    }

    pub fn newton_options(&self) -> NewtonOptions {
        let c = &self.config.static_solver;
        NewtonOptions {
            max_iterations: c.max_iterations,
            tolerance: c.tolerance_rel_weight * self.system.weight,
            max_backtracks: c.max_backtracks,
            max_set_updates: c.max_set_updates,
            trust_radius: None,
        }
    }

    pub fn eigen_options(&self) -> EigenOptions {
        let c = &self.config.eigen;
        EigenOptions {
            tol_rel: c.tol_rel,
            max_bisections: c.max_bisections,
            max_inverse_iterations: c.max_inverse_iterations,
            hint: None,
        }
    }

    pub fn dynamic_options(&self) -> DynamicOptions {
        let c = &self.config.dynamic;
        DynamicOptions {
            dt: c.dt,
            beta: c.beta,
            gamma: c.gamma,
            alpha_m: c.alpha_m,
            settle_energy_rel: c.settle_energy_rel,
            settle_steps: c.settle_steps,
            max_steps: c.max_steps,
            sample_stride: c.sample_stride,
            handoff_after_touch: c.handoff_after_touch,
            handoff_tol_rel: c.handoff_tol_rel,
            min_steps: c.min_steps,
        }
    }

    pub fn continuation_options(&self) -> ContinuationOptions {
        let c = &self.config.continuation;
        ContinuationOptions {
            d_lambda: c.d_lambda,
            d_lambda_min: c.d_lambda_min,
            growth: c.growth,
            eps_stab_rel: c.eps_stab_rel,
            classify_rel: c.classify_rel,
            locate_tol_length: c.locate_tol_meters.unwrap_or(1e-3 * self.length()),
            on_critical: c.on_critical,
            max_steps: c.max_steps,
            snapshot_stride: c.snapshot_stride,
            kick_amplitude_rel: c.kick_amplitude_rel,
            deflection_metric: c.deflection_metric,
            jump_abs_rel: c.jump_abs_rel,
            jump_rel_factor: c.jump_rel_factor,
        }
    }

    pub fn friction_settings(&self) -> FrictionSettings {
        let c = &self.config.friction;
        FrictionSettings {
            enabled: c.enabled,
            target_ratio: c.target_ratio,
            cap_ratio: c.cap_ratio,
        }
    }

    /// Tracer with this scenario's options; friction per the config.
    pub fn tracer(&self) -> Tracer<'_> {
        Tracer {
            system: &self.system,
            newton: self.newton_options(),
            eigen: self.eigen_options(),
            dynamic: self.dynamic_options(),
            options: self.continuation_options(),
            friction: self.friction_settings(),
        }
    }

    /// Tracer with friction forced on or off.
    pub fn tracer_with_friction(&self, enabled: bool) -> Tracer<'_> {
        let mut t = self.tracer();
        t.friction.enabled = enabled;
        t
    }

    /// Flat rest state.
    pub fn rest_state(&self) -> KinematicState {
        KinematicState::zeros(self.system.mesh().node_count())
    }

    /// Convert a hold-end x coordinate to the model frame.
    pub fn to_mid(&self, x_hold_end: f64) -> f64 {
        self.system.mesh().geometry.hold_end_to_mid(x_hold_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_build() {
        let config = ScenarioConfig::default();
        let sc = Scenario::build(config).unwrap();
        assert_eq!(sc.system.mesh().nx, 96);
        assert!(sc.system.ground.is_some());
        assert!(sc.system.grasp.is_some());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = "[geometry]\nl = 0.3\nlenght = 0.4\n";
        let err = ScenarioConfig::from_toml_str(bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("lenght"), "error should name the offending key: {msg}");

        let bad2 = "[nonsense]\nx = 1\n";
        assert!(ScenarioConfig::from_toml_str(bad2).is_err());
    }

    #[test]
    fn partial_config_gets_defaults() {
        let text = "[material]\neta_b = 42.0\n";
        let c = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(c.material.eta_b, 42.0);
        assert_eq!(c.material.eta_m, 1e-3);
        assert_eq!(c.mesh.nx, 96);
    }

    #[test]
    fn canonical_form_round_trips() {
        let c = ScenarioConfig::default();
        let text = c.to_canonical_toml();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(c, back);
        assert_eq!(text, back.to_canonical_toml());
    }
}
