//! JSON configuration shared by simulation, analysis and reporting.
//!
//! Parsing goes through `serde_path_to_error`, so diagnostics name the
//! offending field (`plans[0].vertebra`) together with line and column.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frames::{RigidTransform, UnitQuaternion};
use crate::labels::{Side, Vertebra};
use crate::metrics::{AnchorMode, TrajectoryPlan};
use crate::simproto::{ComplianceModel, MaterialModel, Scene, SimError, SimulationModels, SurgeonModel};
use crate::stats::{AggregateOptions, ReduceMode};
use crate::streams::AlignOptions;

pub const SCHEMA_VERSION: u32 = 1;

/// The shipped default configuration.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.json");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config line {line}, column {column}, field `{field}`: {message}")]
    Parse {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

/// Rigid transform as written in the config: quaternion `[w, x, y, z]`
/// plus translation in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec {
            quaternion: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
        }
    }

    fn to_transform(&self, field: &str) -> Result<RigidTransform, ConfigError> {
        let q = quaternion(&self.quaternion, &format!("{field}.quaternion"))?;
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("{field}.translation"), "must be finite"));
        }
        Ok(RigidTransform::from_quaternion(&q, Vector3::from(self.translation)))
    }
}

fn quaternion(q: &[f64; 4], field: &str) -> Result<UnitQuaternion, ConfigError> {
    UnitQuaternion::new(q[0], q[1], q[2], q[3]).map_err(|e| invalid(field, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    /// Pose of the platform cluster in the robot frame.
    pub robot_platform: TransformSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub vertebra: String,
    pub side: String,
    pub entry: [f64; 3],
    pub exit: [f64; 3],
    /// Derived from the reference orientation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_orientation: Option<[f64; 4]>,
}

fn default_mocap_rate() -> f64 {
    Scene::default().mocap_rate
}
fn default_robot_rate() -> f64 {
    Scene::default().robot_rate
}
fn default_dwell() -> f64 {
    Scene::default().dwell
}
fn default_max_duration() -> f64 {
    Scene::default().max_duration
}
fn default_surgeon_id() -> String {
    Scene::default().surgeon_id
}
fn identity_spec() -> TransformSpec {
    TransformSpec::identity()
}
fn identity_quaternion() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default = "identity_spec")]
    pub camera_platform: TransformSpec,
    #[serde(default = "identity_spec")]
    pub camera_vertebra: TransformSpec,
    #[serde(default = "identity_quaternion")]
    pub reference_orientation: [f64; 4],
    #[serde(default)]
    pub mocap_noise_std: f64,
    #[serde(default)]
    pub mocap_jitter: f64,
    #[serde(default = "default_mocap_rate")]
    pub mocap_rate: f64,
    #[serde(default = "default_robot_rate")]
    pub robot_rate: f64,
    #[serde(default = "default_dwell")]
    pub dwell: f64,
    #[serde(default = "default_max_duration")]
    pub max_duration: f64,
    #[serde(default = "default_surgeon_id")]
    pub surgeon_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub compliance: ComplianceModel,
    pub surgeon: SurgeonModel,
    pub material: MaterialModel,
    pub scene: SceneSpec,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub anchor_mode: AnchorMode,
    #[serde(default)]
    pub reduce: ReduceMode,
    /// Largest tolerated gap between vertebra samples, s.
    #[serde(default)]
    pub max_gap: Option<f64>,
    #[serde(default)]
    pub phase_gating: bool,
}

impl AnalysisSpec {
    pub fn align_options(&self) -> AlignOptions {
        AlignOptions { max_gap: self.max_gap }
    }

    pub fn aggregate_options(&self) -> AggregateOptions {
        AggregateOptions {
            phase_gating: self.phase_gating,
            reduce: self.reduce,
        }
    }
}

/// The config document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    /// Free-text remark; ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub calibration: CalibrationSpec,
    pub plans: Vec<PlanSpec>,
    pub simulation: SimulationSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub file: ConfigFile,
    pub calibration: RigidTransform,
    pub plans: Vec<TrajectoryPlan>,
    pub models: SimulationModels,
    pub analysis: AnalysisSpec,
    fingerprint: String,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::parse(&text)
    }

    pub fn default_config() -> Config {
        Config::parse(DEFAULT_CONFIG).expect("shipped config is valid")
    }

    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                field,
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        Config::from_file(file)
    }

    pub fn from_file(file: ConfigFile) -> Result<Config, ConfigError> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema_version),
            ));
        }
        let calibration = file
            .calibration
            .robot_platform
            .to_transform("calibration.robot_platform")?;
        let sc = &file.simulation.scene;
        let reference = quaternion(&sc.reference_orientation, "simulation.scene.reference_orientation")?;
        if file.plans.is_empty() {
            return Err(invalid("plans", "at least one plan is required"));
        }
        let plans = file
            .plans
            .iter()
            .enumerate()
            .map(|(i, p)| plan(p, &format!("plans[{i}]"), &reference))
            .collect::<Result<Vec<_>, _>>()?;

        let scene = Scene {
            robot_platform: calibration,
            camera_platform: sc.camera_platform.to_transform("simulation.scene.camera_platform")?,
            camera_vertebra: sc.camera_vertebra.to_transform("simulation.scene.camera_vertebra")?,
            reference_orientation: reference,
            mocap_noise_std: sc.mocap_noise_std,
            mocap_jitter: sc.mocap_jitter,
            mocap_rate: sc.mocap_rate,
            robot_rate: sc.robot_rate,
            dwell: sc.dwell,
            max_duration: sc.max_duration,
            surgeon_id: sc.surgeon_id.clone(),
        };
        let models = SimulationModels {
            compliance: file.simulation.compliance,
            surgeon: file.simulation.surgeon,
            material: file.simulation.material,
            scene,
        };
        models.validate().map_err(|e| match e {
            SimError::InvalidModel { field, reason } => invalid(format!("simulation.{field}"), reason),
            other => invalid("simulation", other.to_string()),
        })?;
        if let Some(g) = file.analysis.max_gap {
            if !(g.is_finite() && g > 0.0) {
                return Err(invalid("analysis.max_gap", "must be positive"));
            }
        }
        let canonical = serde_json::to_vec(&file).expect("config serializes");
        let fingerprint = hex::encode(Sha256::digest(&canonical));
        Ok(Config {
            analysis: file.analysis,
            file,
            calibration,
            plans,
            models,
            fingerprint,
        })
    }

    /// SHA-256 of the canonical serialization of the parsed document.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn plan_for(&self, vertebra: Vertebra, side: Side) -> Option<&TrajectoryPlan> {
        self.plans.iter().find(|p| p.vertebra == vertebra && p.side == side)
    }

    /// Plan used for the `index`-th simulated run (cycles through the list).
    pub fn plan_for_run(&self, index: usize) -> &TrajectoryPlan {
        &self.plans[index % self.plans.len()]
    }
}

fn plan(p: &PlanSpec, field: &str, reference: &UnitQuaternion) -> Result<TrajectoryPlan, ConfigError> {
    let vertebra: Vertebra = p
        .vertebra
        .parse()
        .map_err(|e: crate::labels::LabelError| invalid(format!("{field}.vertebra"), e.to_string()))?;
    let side: Side = p
        .side
        .parse()
        .map_err(|e: crate::labels::LabelError| invalid(format!("{field}.side"), e.to_string()))?;
    let entry = Vector3::from(p.entry);
    let exit = Vector3::from(p.exit);
    if entry.iter().chain(exit.iter()).any(|v| !v.is_finite()) {
        return Err(invalid(field, "entry and exit must be finite"));
    }
    let built = match &p.desired_orientation {
        Some(q) => {
            let q = quaternion(q, &format!("{field}.desired_orientation"))?;
            TrajectoryPlan::new(vertebra, side, entry, exit, q)
        }
        None => TrajectoryPlan::from_points(vertebra, side, entry, exit, reference),
    };
    built.map_err(|e| invalid(field, e.to_string()))
}
