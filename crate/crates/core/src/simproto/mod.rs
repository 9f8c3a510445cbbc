//! Deterministic simulator of the co-manipulated drilling protocol.
//!
//! The protocol runs `Idle → Aligning → EntryAdjust → ArmedRetracted →
//! Drilling → Complete`. During drilling the commanded pose may only move
//! along the planned direction; the tool pose the robot actually reaches is
//! the commanded pose displaced quasi-statically by the external wrench
//! through a per-axis compliance.

mod noise;

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use noise::{seeded, BandLimitedNoise, MOCAP_STREAM, SURGEON_STREAM};

use crate::frames::{chain_to_vertebra, FrameId, RigidTransform, UnitQuaternion};
use crate::metrics::{aligned_orientation, TrajectoryPlan};
use crate::streams::{
    EpochOffsets, PoseStream, Recording, RecordingMeta, RobotLog, StreamError, ToolSample, WrenchSample,
};

/// Distance the tool is backed off along the planned direction before the
/// drill is activated, mm.
pub const RETRACT_DISTANCE: f64 = 30.0;
/// Drilling depth past the confirmed entry point, mm.
pub const TARGET_DEPTH: f64 = 15.0;

/// Joint configuration written to the robot log; the arm kinematics are
/// not simulated.
pub const NOMINAL_JOINTS: [f64; 7] = [
    0.0,
    -std::f64::consts::FRAC_PI_4,
    0.0,
    -3.0 * std::f64::consts::FRAC_PI_4,
    0.0,
    std::f64::consts::FRAC_PI_2,
    std::f64::consts::FRAC_PI_4,
];

#[derive(Debug, Error)]
pub enum SimError {
    #[error("command not allowed in state {found:?} (expected {expected:?})")]
    WrongState {
        expected: ProtocolState,
        found: ProtocolState,
    },
    #[error("invalid model parameter {field}: {reason}")]
    InvalidModel { field: String, reason: String },
    #[error("drilling did not complete within {0} s")]
    DurationExceeded(f64),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

fn invalid(field: &str, reason: impl Into<String>) -> SimError {
    SimError::InvalidModel {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProtocolState {
    Idle,
    Aligning,
    EntryAdjust,
    ArmedRetracted,
    Drilling,
    Complete,
}

/// Stiffness of one axis; `"rigid"` in configuration means infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisStiffness {
    Finite(f64),
    Rigid(RigidTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigidTag {
    Rigid,
}

impl AxisStiffness {
    pub const RIGID: AxisStiffness = AxisStiffness::Rigid(RigidTag::Rigid);

    /// Inverse stiffness; zero for a rigid axis.
    pub fn compliance(&self) -> f64 {
        match self {
            AxisStiffness::Finite(k) => 1.0 / k,
            AxisStiffness::Rigid(_) => 0.0,
        }
    }
}

/// Quasi-static compliance of the tool mount, axes of the vertebra frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceModel {
    /// N/mm.
    pub translational: [AxisStiffness; 3],
    /// N·m/deg.
    pub rotational: [AxisStiffness; 3],
}

impl ComplianceModel {
    pub fn rigid() -> Self {
        ComplianceModel {
            translational: [AxisStiffness::RIGID; 3],
            rotational: [AxisStiffness::RIGID; 3],
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let all = self
            .translational
            .iter()
            .map(|k| ("compliance.translational", k))
            .chain(self.rotational.iter().map(|k| ("compliance.rotational", k)));
        for (field, k) in all {
            if let AxisStiffness::Finite(v) = k {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(invalid(field, format!("stiffness must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Displacement (mm) under `force` (N).
    pub fn displacement(&self, force: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| force[i] * self.translational[i].compliance())
    }

    /// Angular deflection (deg, rotation vector) under `torque` (N·m).
    pub fn deflection(&self, torque: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| torque[i] * self.rotational[i].compliance())
    }
}

/// Stand-in for the surgeon's hand: constant biases plus band-limited noise,
/// and a constant feed rate along the drilling direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurgeonModel {
    /// Set per run from the command line.
    #[serde(skip)]
    pub seed: u64,
    /// N; applied once the drill is in contact with the material.
    pub lateral_force_bias: [f64; 3],
    /// N.
    pub force_noise_std: f64,
    /// N·m; applied once the drill is in contact with the material.
    pub torque_bias: [f64; 3],
    /// N·m.
    pub torque_noise_std: f64,
    /// mm/s.
    pub feed_rate: f64,
    /// Hz.
    pub noise_bandwidth: f64,
    /// Deviation of the confirmed entry point from the planned one, mm.
    #[serde(default)]
    pub entry_offset: [f64; 3],
}

impl SurgeonModel {
    pub fn quiet(feed_rate: f64) -> Self {
        SurgeonModel {
            seed: 0,
            lateral_force_bias: [0.0; 3],
            force_noise_std: 0.0,
            torque_bias: [0.0; 3],
            torque_noise_std: 0.0,
            feed_rate,
            noise_bandwidth: 10.0,
            entry_offset: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let finite = self
            .lateral_force_bias
            .iter()
            .chain(&self.torque_bias)
            .chain(&self.entry_offset)
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("surgeon", "biases and offsets must be finite"));
        }
        if !(self.feed_rate.is_finite() && self.feed_rate > 0.0) {
            return Err(invalid("surgeon.feed_rate", "must be positive"));
        }
        if !(self.force_noise_std >= 0.0 && self.force_noise_std.is_finite()) {
            return Err(invalid("surgeon.force_noise_std", "must be non-negative"));
        }
        if !(self.torque_noise_std >= 0.0 && self.torque_noise_std.is_finite()) {
            return Err(invalid("surgeon.torque_noise_std", "must be non-negative"));
        }
        if !(self.noise_bandwidth.is_finite() && self.noise_bandwidth > 0.0) {
            return Err(invalid("surgeon.noise_bandwidth", "must be positive"));
        }
        Ok(())
    }
}

/// Material reaction while the drill tip is inside `[0, TARGET_DEPTH]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialModel {
    /// N per mm/s of feed, opposing the feed.
    pub resistance: f64,
    /// N, applied equally on the three axes.
    pub vibration_amplitude: f64,
    /// Hz.
    pub vibration_frequency: f64,
}

impl MaterialModel {
    pub fn none() -> Self {
        MaterialModel {
            resistance: 0.0,
            vibration_amplitude: 0.0,
            vibration_frequency: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.resistance.is_finite() && self.resistance >= 0.0) {
            return Err(invalid("material.resistance", "must be non-negative"));
        }
        if !(self.vibration_amplitude.is_finite() && self.vibration_amplitude >= 0.0) {
            return Err(invalid("material.vibration_amplitude", "must be non-negative"));
        }
        if !(self.vibration_frequency.is_finite() && self.vibration_frequency >= 0.0) {
            return Err(invalid("material.vibration_frequency", "must be non-negative"));
        }
        Ok(())
    }
}

/// Static scene and recording setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    /// Robot-to-platform calibration.
    pub robot_platform: RigidTransform,
    /// Platform cluster pose measured by the camera.
    pub camera_platform: RigidTransform,
    /// Vertebra cluster pose measured by the camera.
    pub camera_vertebra: RigidTransform,
    /// Tool orientation whose local +z is the drill axis before alignment.
    pub reference_orientation: UnitQuaternion,
    /// Per-axis std of cluster position noise, mm.
    pub mocap_noise_std: f64,
    /// Max uniform jitter of interior mocap timestamps, s.
    pub mocap_jitter: f64,
    pub mocap_rate: f64,
    pub robot_rate: f64,
    /// Time the tool is held at full depth after completion, s.
    pub dwell: f64,
    /// Cap on simulated time, s.
    pub max_duration: f64,
    pub surgeon_id: String,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            robot_platform: RigidTransform::identity(),
            camera_platform: RigidTransform::identity(),
            camera_vertebra: RigidTransform::identity(),
            reference_orientation: UnitQuaternion::IDENTITY,
            mocap_noise_std: 0.0,
            mocap_jitter: 0.0,
            mocap_rate: 120.0,
            robot_rate: 1000.0,
            dwell: 0.1,
            max_duration: 120.0,
            surgeon_id: "S1".to_string(),
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mocap_rate.is_finite() && self.mocap_rate > 0.0) {
            return Err(invalid("scene.mocap_rate", "must be positive"));
        }
        if !(self.robot_rate.is_finite() && self.robot_rate > 0.0) {
            return Err(invalid("scene.robot_rate", "must be positive"));
        }
        if !(self.mocap_noise_std.is_finite() && self.mocap_noise_std >= 0.0) {
            return Err(invalid("scene.mocap_noise_std", "must be non-negative"));
        }
        if !(self.mocap_jitter >= 0.0 && self.mocap_jitter < 0.5 / self.mocap_rate) {
            return Err(invalid("scene.mocap_jitter", "must be in [0, half a mocap period)"));
        }
        if !(self.dwell.is_finite() && self.dwell >= 0.0) {
            return Err(invalid("scene.dwell", "must be non-negative"));
        }
        if !(self.max_duration.is_finite() && self.max_duration > 0.0) {
            return Err(invalid("scene.max_duration", "must be positive"));
        }
        Ok(())
    }

    /// True robot-to-vertebra transform of the static scene.
    pub fn robot_vertebra(&self) -> RigidTransform {
        chain_to_vertebra(
            &self.robot_platform,
            &self.camera_platform.inverse(),
            &self.camera_vertebra,
        )
    }
}

/// Commanded tool pose in the vertebra frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandedPose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion,
}

/// Pose the robot moves to on its own: drill axis on the planned direction
/// (minimal rotation of `reference`), tip retracted on the planned line.
pub fn auto_align(plan: &TrajectoryPlan, reference: &UnitQuaternion) -> CommandedPose {
    let u = plan.direction();
    CommandedPose {
        position: plan.entry() - u * RETRACT_DISTANCE,
        orientation: aligned_orientation(reference, &u),
    }
}

/// Manual entry refinement: translation only, orientation kept.
pub fn entry_adjust(pose: &CommandedPose, delta: &Vector3<f64>) -> CommandedPose {
    CommandedPose {
        position: pose.position + delta,
        orientation: pose.orientation,
    }
}

/// Backs the tool off the confirmed entry (`pose.position`) along `U`.
pub fn arm(pose: &CommandedPose, plan: &TrajectoryPlan) -> CommandedPose {
    CommandedPose {
        position: pose.position - plan.direction() * RETRACT_DISTANCE,
        orientation: pose.orientation,
    }
}

/// Protocol state machine over the commanded pose.
#[derive(Debug, Clone)]
pub struct Protocol {
    state: ProtocolState,
    plan: TrajectoryPlan,
    reference: UnitQuaternion,
    pose: Option<CommandedPose>,
    entry: Vector3<f64>,
    /// Commanded depth past the confirmed entry, mm.
    depth: f64,
}

impl Protocol {
    pub fn new(plan: TrajectoryPlan, reference: UnitQuaternion) -> Self {
        Protocol {
            state: ProtocolState::Idle,
            entry: plan.entry(),
            plan,
            reference,
            pose: None,
            depth: -RETRACT_DISTANCE,
        }
    }

    fn expect(&self, expected: ProtocolState) -> Result<(), SimError> {
        if self.state != expected {
            return Err(SimError::WrongState {
                expected,
                found: self.state,
            });
        }
        Ok(())
    }

    pub fn state(&self) -> ProtocolState {
        self.state
    }

    pub fn plan(&self) -> &TrajectoryPlan {
        &self.plan
    }

    pub fn pose(&self) -> Option<CommandedPose> {
        self.pose
    }

    pub fn confirmed_entry(&self) -> Vector3<f64> {
        self.entry
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    /// The surgeon picks the vertebra and side.
    pub fn select(&mut self) -> Result<(), SimError> {
        self.expect(ProtocolState::Idle)?;
        self.state = ProtocolState::Aligning;
        Ok(())
    }

    pub fn auto_align(&mut self) -> Result<CommandedPose, SimError> {
        self.expect(ProtocolState::Aligning)?;
        let pose = auto_align(&self.plan, &self.reference);
        self.pose = Some(pose);
        self.state = ProtocolState::EntryAdjust;
        Ok(pose)
    }

    pub fn entry_adjust(&mut self, delta: &Vector3<f64>) -> Result<CommandedPose, SimError> {
        self.expect(ProtocolState::EntryAdjust)?;
        let pose = entry_adjust(&self.commanded(), delta);
        self.pose = Some(pose);
        Ok(pose)
    }

    /// Confirms the current position as the entry point and retracts.
    pub fn arm(&mut self) -> Result<CommandedPose, SimError> {
        self.expect(ProtocolState::EntryAdjust)?;
        let current = self.commanded();
        self.entry = current.position;
        let pose = arm(&current, &self.plan);
        self.pose = Some(pose);
        self.depth = -RETRACT_DISTANCE;
        self.state = ProtocolState::ArmedRetracted;
        Ok(pose)
    }

    /// Starts the drill; from here on only translation along `U` is free.
    pub fn activate(&mut self) -> Result<(), SimError> {
        self.expect(ProtocolState::ArmedRetracted)?;
        self.state = ProtocolState::Drilling;
        Ok(())
    }

    /// Feeds the tool by `distance` mm along `U`, stopping at the target depth.
    pub fn advance(&mut self, distance: f64) -> Result<CommandedPose, SimError> {
        self.feed_to(self.depth + distance)
    }

    /// Moves the tool to commanded `depth` (clamped to the target). Depth
    /// never decreases while drilling.
    pub fn feed_to(&mut self, depth: f64) -> Result<CommandedPose, SimError> {
        self.expect(ProtocolState::Drilling)?;
        self.depth = depth.max(self.depth).min(TARGET_DEPTH);
        if self.depth >= TARGET_DEPTH {
            self.state = ProtocolState::Complete;
        }
        let mut pose = self.commanded();
        pose.position = self.entry + self.plan.direction() * self.depth;
        self.pose = Some(pose);
        Ok(pose)
    }

    fn commanded(&self) -> CommandedPose {
        self.pose.unwrap_or_else(|| auto_align(&self.plan, &self.reference))
    }
}

/// One simulator output: actual tool pose and external wrench, both in the
/// vertebra frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub state: ProtocolState,
    pub tool: ToolSample,
    pub wrench: WrenchSample,
}

#[derive(Debug, Clone)]
pub struct SimulationModels {
    pub compliance: ComplianceModel,
    pub surgeon: SurgeonModel,
    pub material: MaterialModel,
    pub scene: Scene,
}

impl SimulationModels {
    pub fn validate(&self) -> Result<(), SimError> {
        self.compliance.validate()?;
        self.surgeon.validate()?;
        self.material.validate()?;
        self.scene.validate()
    }
}

/// Stateful drilling simulation for one plan.
pub struct Simulator {
    protocol: Protocol,
    compliance: ComplianceModel,
    surgeon: SurgeonModel,
    material: MaterialModel,
    rng: ChaCha8Rng,
    force_noise: BandLimitedNoise,
    torque_noise: BandLimitedNoise,
    t: f64,
}

impl Simulator {
    pub fn new(
        protocol: Protocol,
        compliance: ComplianceModel,
        surgeon: SurgeonModel,
        material: MaterialModel,
    ) -> Self {
        let mut rng = seeded(surgeon.seed, SURGEON_STREAM);
        let force_noise = BandLimitedNoise::new(surgeon.force_noise_std, surgeon.noise_bandwidth, &mut rng);
        let torque_noise = BandLimitedNoise::new(surgeon.torque_noise_std, surgeon.noise_bandwidth, &mut rng);
        Simulator {
            protocol,
            compliance,
            surgeon,
            material,
            rng,
            force_noise,
            torque_noise,
            t: 0.0,
        }
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn protocol_mut(&mut self) -> &mut Protocol {
        &mut self.protocol
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    fn engaged(&self) -> bool {
        let d = self.protocol.depth();
        (0.0..=TARGET_DEPTH).contains(&d)
    }

    fn external_wrench(&self) -> WrenchSample {
        let u = self.protocol.plan().direction();
        let mut force = self.force_noise.value();
        let mut torque = self.torque_noise.value();
        if self.engaged() {
            force += Vector3::from(self.surgeon.lateral_force_bias);
            torque += Vector3::from(self.surgeon.torque_bias);
            if self.protocol.state() == ProtocolState::Drilling {
                force -= u * (self.material.resistance * self.surgeon.feed_rate);
            }
            let phase = 2.0 * std::f64::consts::PI * self.material.vibration_frequency * self.t;
            let vib = self.material.vibration_amplitude * phase.sin();
            force += Vector3::repeat(vib / 3f64.sqrt());
        }
        WrenchSample {
            t: self.t,
            force,
            torque,
        }
    }

    /// Actual pose and wrench at the current time without advancing.
    pub fn emit(&self) -> Result<Emission, SimError> {
        let state = self.protocol.state();
        if state < ProtocolState::Drilling {
            return Err(SimError::WrongState {
                expected: ProtocolState::Drilling,
                found: state,
            });
        }
        let cmd = self.protocol.commanded();
        let wrench = self.external_wrench();
        let position = cmd.position + self.compliance.displacement(&wrench.force);
        let deflection = self.compliance.deflection(&wrench.torque).map(f64::to_radians);
        let orientation = UnitQuaternion::from_rotation_vector(&deflection) * cmd.orientation;
        Ok(Emission {
            state,
            tool: ToolSample {
                t: self.t,
                position,
                orientation,
                frame: FrameId::Vertebra,
            },
            wrench,
        })
    }

    /// Advances the simulation clock to `t` and emits the new sample.
    ///
    /// While drilling the commanded depth grows at the feed rate; once
    /// complete the pose is held.
    pub fn advance_to(&mut self, t: f64) -> Result<Emission, SimError> {
        let dt = t - self.t;
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("time step must be positive, got {dt}")));
        }
        match self.protocol.state() {
            ProtocolState::Drilling => {
                // Depth from elapsed time rather than summed increments.
                let depth = -RETRACT_DISTANCE + self.surgeon.feed_rate * t;
                self.protocol.feed_to(depth)?;
            }
            ProtocolState::Complete => {}
            found => {
                return Err(SimError::WrongState {
                    expected: ProtocolState::Drilling,
                    found,
                })
            }
        }
        self.force_noise.advance(dt, &mut self.rng);
        self.torque_noise.advance(dt, &mut self.rng);
        self.t = t;
        self.emit()
    }

    pub fn step(&mut self, dt: f64) -> Result<Emission, SimError> {
        self.advance_to(self.t + dt)
    }
}

/// Output of a full protocol run.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub recording: Recording,
    /// Commanded depth past the confirmed entry at the end, mm.
    pub final_depth: f64,
    /// Time at which the target depth was reached, s.
    pub completion_time: f64,
    /// Commanded entry after manual adjustment, vertebra frame.
    pub confirmed_entry: Vector3<f64>,
    /// Commanded pose right after arming.
    pub armed_pose: CommandedPose,
}

/// Runs the whole protocol for `plan` and produces a recording bundle.
///
/// The robot log is emitted at `scene.robot_rate` and the two camera
/// clusters at `scene.mocap_rate`; recording starts when the drill is
/// activated and stops `scene.dwell` seconds after reaching full depth.
pub fn simulate_drilling(
    plan: &TrajectoryPlan,
    models: &SimulationModels,
    seed: u64,
) -> Result<SimulationRun, SimError> {
    models.validate()?;
    let scene = &models.scene;
    let mut surgeon = models.surgeon;
    surgeon.seed = seed;

    let mut protocol = Protocol::new(plan.clone(), scene.reference_orientation);
    protocol.select()?;
    let aligned = protocol.auto_align()?;
    let target_entry = plan.entry() + Vector3::from(surgeon.entry_offset);
    protocol.entry_adjust(&(target_entry - aligned.position))?;
    let armed_pose = protocol.arm()?;
    let confirmed_entry = protocol.confirmed_entry();
    protocol.activate()?;

    let mut sim = Simulator::new(protocol, models.compliance, surgeon, models.material);
    let robot_vertebra = scene.robot_vertebra();

    let mut tool_samples = Vec::new();
    let mut wrenches = Vec::new();
    let mut record = |e: &Emission| {
        let pose = robot_vertebra.compose(&e.tool.pose());
        tool_samples.push(ToolSample::from_pose(e.tool.t, &pose, FrameId::Robot));
        wrenches.push(WrenchSample {
            t: e.wrench.t,
            force: robot_vertebra.transform_vector(&e.wrench.force),
            torque: robot_vertebra.transform_vector(&e.wrench.torque),
        });
    };
    record(&sim.emit()?);

    let mut completion_time = None;
    let mut n: u64 = 0;
    loop {
        n += 1;
        let t = n as f64 / scene.robot_rate;
        if t > scene.max_duration {
            return Err(SimError::DurationExceeded(scene.max_duration));
        }
        let e = sim.advance_to(t)?;
        record(&e);
        if e.state == ProtocolState::Complete {
            let done = *completion_time.get_or_insert(t);
            if t - done >= scene.dwell {
                break;
            }
        }
    }
    let end = sim.time();
    let completion_time = completion_time.unwrap_or(end);

    let joints = vec![NOMINAL_JOINTS; tool_samples.len()];
    let robot = RobotLog {
        poses: PoseStream::new(tool_samples, scene.robot_rate, FrameId::Robot)?,
        wrenches,
        joints,
    };

    let mut mocap_rng = seeded(seed, MOCAP_STREAM);
    let frames = (end * scene.mocap_rate).floor() as u64;
    let mut vertebra = Vec::with_capacity(frames as usize + 1);
    let mut platform = Vec::with_capacity(frames as usize + 1);
    for k in 0..=frames {
        let mut t = k as f64 / scene.mocap_rate;
        if scene.mocap_jitter > 0.0 && k > 0 && k < frames {
            t += mocap_rng.random_range(-scene.mocap_jitter..scene.mocap_jitter);
        }
        for (cluster, out) in [
            (&scene.camera_vertebra, &mut vertebra),
            (&scene.camera_platform, &mut platform),
        ] {
            let mut pose = *cluster;
            if scene.mocap_noise_std > 0.0 {
                pose.translation += noise::normal3(&mut mocap_rng) * scene.mocap_noise_std;
            }
            out.push(ToolSample::from_pose(t, &pose, FrameId::Camera));
        }
    }

    let recording = Recording {
        meta: RecordingMeta {
            surgeon_id: scene.surgeon_id.clone(),
            vertebra: plan.vertebra,
            side: plan.side,
            epoch_offsets: EpochOffsets::default(),
        },
        robot,
        vertebra: PoseStream::new(vertebra, scene.mocap_rate, FrameId::Camera)?,
        platform: PoseStream::new(platform, scene.mocap_rate, FrameId::Camera)?,
    };
    Ok(SimulationRun {
        recording,
        final_depth: sim.protocol().depth(),
        completion_time,
        confirmed_entry,
        armed_pose,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Side, Vertebra};

    fn plan(exit: Vector3<f64>) -> TrajectoryPlan {
        TrajectoryPlan::from_points(
            Vertebra::C4,
            Side::Right,
            Vector3::new(5.0, -3.0, 2.0),
            exit,
            &UnitQuaternion::IDENTITY,
        )
        .unwrap()
    }

    #[test]
    fn auto_align_keeps_reference_when_already_aligned() {
        let p = plan(Vector3::new(5.0, -3.0, 30.0));
        let pose = auto_align(&p, &UnitQuaternion::IDENTITY);
        assert_eq!(pose.orientation, UnitQuaternion::IDENTITY);
        assert_eq!(pose.position, Vector3::new(5.0, -3.0, 2.0 - RETRACT_DISTANCE));
    }

    #[test]
    fn auto_align_antipodal_turns_about_reference_x() {
        let p = plan(Vector3::new(5.0, -3.0, -30.0));
        let pose = auto_align(&p, &UnitQuaternion::IDENTITY);
        let expected = UnitQuaternion::from_axis_angle(&Vector3::x(), std::f64::consts::PI);
        assert!(pose.orientation.angle_to(&expected) < 1e-12);
        let axis = crate::metrics::drill_axis(&pose.orientation);
        assert!((axis.dot(&p.direction()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entry_adjust_translates_only() {
        let pose = CommandedPose {
            position: Vector3::new(1.0, 1.0, 1.0),
            orientation: UnitQuaternion::from_axis_angle(&Vector3::y(), 0.3),
        };
        assert_eq!(entry_adjust(&pose, &Vector3::zeros()), pose);
        let moved = entry_adjust(&pose, &Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(moved.position, Vector3::new(2.0, 3.0, 4.0));
        assert_eq!(moved.orientation, pose.orientation);
        let twice = entry_adjust(
            &entry_adjust(&pose, &Vector3::new(1.0, 0.0, 0.0)),
            &Vector3::new(0.0, 2.0, 0.0),
        );
        assert_eq!(
            twice.position,
            entry_adjust(&pose, &Vector3::new(1.0, 2.0, 0.0)).position
        );
    }

    #[test]
    fn arm_retracts_thirty_millimetres() {
        let p = TrajectoryPlan::from_points(
            Vertebra::C3,
            Side::Left,
            Vector3::zeros(),
            Vector3::z() * 20.0,
            &UnitQuaternion::IDENTITY,
        )
        .unwrap();
        let at_entry = CommandedPose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::IDENTITY,
        };
        let armed = arm(&at_entry, &p);
        assert_eq!(armed.position, Vector3::new(0.0, 0.0, -30.0));
        assert_eq!(armed.orientation, at_entry.orientation);
    }

    #[test]
    fn protocol_rejects_out_of_order_commands() {
        let mut proto = Protocol::new(plan(Vector3::new(9.0, 0.0, 20.0)), UnitQuaternion::IDENTITY);
        assert!(matches!(proto.arm(), Err(SimError::WrongState { .. })));
        assert!(matches!(proto.auto_align(), Err(SimError::WrongState { .. })));
        proto.select().unwrap();
        assert!(matches!(proto.select(), Err(SimError::WrongState { .. })));
        assert!(matches!(
            proto.entry_adjust(&Vector3::zeros()),
            Err(SimError::WrongState { .. })
        ));
        proto.auto_align().unwrap();
        assert!(matches!(proto.activate(), Err(SimError::WrongState { .. })));
        proto.entry_adjust(&Vector3::zeros()).unwrap();
        proto.arm().unwrap();
        assert!(matches!(
            proto.entry_adjust(&Vector3::zeros()),
            Err(SimError::WrongState { .. })
        ));
        assert!(matches!(proto.advance(1.0), Err(SimError::WrongState { .. })));
        proto.activate().unwrap();
        assert_eq!(proto.state(), ProtocolState::Drilling);
        proto.advance(100.0).unwrap();
        assert_eq!(proto.state(), ProtocolState::Complete);
        assert_eq!(proto.depth(), TARGET_DEPTH);
        assert!(matches!(proto.advance(1.0), Err(SimError::WrongState { .. })));
    }

    fn armed_simulator(compliance: ComplianceModel, surgeon: SurgeonModel) -> Simulator {
        let p = TrajectoryPlan::from_points(
            Vertebra::C5,
            Side::Left,
            Vector3::zeros(),
            Vector3::z() * 20.0,
            &UnitQuaternion::IDENTITY,
        )
        .unwrap();
        let mut proto = Protocol::new(p, UnitQuaternion::IDENTITY);
        proto.select().unwrap();
        let aligned = proto.auto_align().unwrap();
        proto.entry_adjust(&-aligned.position).unwrap();
        proto.arm().unwrap();
        proto.activate().unwrap();
        Simulator::new(proto, compliance, surgeon, MaterialModel::none())
    }

    #[test]
    fn step_before_drilling_is_wrong_state() {
        let p = plan(Vector3::new(9.0, 0.0, 20.0));
        let mut sim = Simulator::new(
            Protocol::new(p, UnitQuaternion::IDENTITY),
            ComplianceModel::rigid(),
            SurgeonModel::quiet(2.0),
            MaterialModel::none(),
        );
        assert!(matches!(sim.step(0.001), Err(SimError::WrongState { .. })));
    }

    #[test]
    fn hooke_lateral_displacement() {
        let mut compliance = ComplianceModel::rigid();
        compliance.translational[1] = AxisStiffness::Finite(5.0);
        let mut surgeon = SurgeonModel::quiet(3.0);
        surgeon.lateral_force_bias = [0.0, 5.0, 0.0];
        let mut sim = armed_simulator(compliance, surgeon);
        let mut last = None;
        while sim.protocol().state() != ProtocolState::Complete {
            last = Some(sim.step(0.001).unwrap());
        }
        let e = last.unwrap();
        assert!((e.tool.position.y - 1.0).abs() < 1e-12);
        assert_eq!(e.tool.position.x, 0.0);
    }

    #[test]
    fn rigid_quiet_run_stays_on_line() {
        let mut sim = armed_simulator(ComplianceModel::rigid(), SurgeonModel::quiet(3.0));
        let mut prev_depth = sim.protocol().depth();
        let mut n = 0u64;
        while sim.protocol().state() != ProtocolState::Complete {
            n += 1;
            let e = sim.advance_to(n as f64 / 1000.0).unwrap();
            assert_eq!(e.tool.position.x, 0.0);
            assert_eq!(e.tool.position.y, 0.0);
            assert_eq!(e.tool.orientation, UnitQuaternion::IDENTITY);
            let d = sim.protocol().depth();
            assert!(d > prev_depth);
            prev_depth = d;
        }
        assert_eq!(sim.protocol().depth(), TARGET_DEPTH);
        // 45 mm at 3 mm/s
        assert_eq!(n, 15_000);
    }

    #[test]
    fn invalid_models_are_rejected() {
        let mut c = ComplianceModel::rigid();
        c.translational[0] = AxisStiffness::Finite(0.0);
        assert!(matches!(c.validate(), Err(SimError::InvalidModel { .. })));
        assert!(SurgeonModel::quiet(0.0).validate().is_err());
        let mut s = SurgeonModel::quiet(1.0);
        s.force_noise_std = -1.0;
        assert!(s.validate().is_err());
        let mut m = MaterialModel::none();
        m.resistance = -0.5;
        assert!(m.validate().is_err());
    }

    #[test]
    fn stiffness_serde_accepts_rigid_keyword() {
        let c: ComplianceModel =
            serde_json::from_str(r#"{"translational":[40.0,"rigid",15],"rotational":["rigid","rigid",2.5]}"#).unwrap();
        assert_eq!(c.translational[1], AxisStiffness::RIGID);
        assert_eq!(c.rotational[2], AxisStiffness::Finite(2.5));
        assert_eq!(
            serde_json::to_string(&c.translational).unwrap(),
            r#"[40.0,"rigid",15.0]"#
        );
    }
}
