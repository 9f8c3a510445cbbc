//! Pose and wrench streams, their ingestion, and temporal alignment onto a
//! common timebase.

mod align;
mod bundle;
mod csv_io;

use std::path::PathBuf;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{FrameId, RigidTransform, UnitQuaternion};
use crate::labels::{Side, Vertebra};

pub use align::{align, check_gaps, AlignOptions, SynchronizedRecording};
pub use bundle::{load_recording, write_recording, META_FILE, PLATFORM_FILE, ROBOT_FILE, VERTEBRA_FILE};
pub use csv_io::{
    ingest_pose_csv, ingest_robot_csv, read_pose_csv, read_robot_csv, read_wrench_csv, write_pose_csv, write_robot_csv,
    write_wrench_csv, POSE_HEADER, ROBOT_HEADER, WRENCH_HEADER,
};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<StreamError>,
    },
    #[error("cannot read file: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("malformed row {row} (line {line}): {reason}")]
    MalformedRow { line: u64, row: usize, reason: String },
    #[error("non-monotonic timestamp at row {row} (line {line}): {t} s")]
    NonMonotonicTimestamp { line: u64, row: usize, t: f64 },
    #[error("quaternion norm {norm} is not unit at row {row} (line {line})")]
    NonUnitQuaternion { line: u64, row: usize, norm: f64 },
    #[error("stream contains no samples")]
    EmptyStream,
    #[error("timestamp {t} s is negative or not finite")]
    InvalidTimestamp { t: f64 },
    #[error("timestamps not strictly increasing at index {index}")]
    Unordered { index: usize },
    #[error("sample tagged {found} in a {expected} stream")]
    FrameMismatch { expected: FrameId, found: FrameId },
    #[error("streams do not overlap (window [{start}, {end}])")]
    NoOverlap { start: f64, end: f64 },
    #[error("timestamp {t} s lies outside the stream window [{start}, {end}]")]
    OutOfWindow { t: f64, start: f64, end: f64 },
    #[error("{stream} stream has a {gap} s gap at t = {t} s (limit {limit} s)")]
    GapTooLarge {
        stream: String,
        t: f64,
        gap: f64,
        limit: f64,
    },
    #[error("invalid metadata: {0}")]
    Meta(String),
}

impl StreamError {
    pub fn in_file(self, path: impl Into<PathBuf>) -> StreamError {
        match self {
            e @ StreamError::InFile { .. } => e,
            e => StreamError::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    /// The underlying error with any file context removed.
    pub fn root(&self) -> &StreamError {
        match self {
            StreamError::InFile { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Timestamped tool (or marker-cluster) pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToolSample {
    /// Seconds.
    pub t: f64,
    /// Millimetres.
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion,
    pub frame: FrameId,
}

impl ToolSample {
    pub fn from_pose(t: f64, pose: &RigidTransform, frame: FrameId) -> Self {
        ToolSample {
            t,
            position: pose.translation,
            orientation: pose.quaternion(),
            frame,
        }
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform::from_quaternion(&self.orientation, self.position)
    }
}

/// Force (N) and torque (N·m) measured at the end effector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrenchSample {
    pub t: f64,
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl WrenchSample {
    pub fn zero(t: f64) -> Self {
        WrenchSample {
            t,
            force: Vector3::zeros(),
            torque: Vector3::zeros(),
        }
    }
}

fn valid_time(t: f64) -> bool {
    t.is_finite() && t >= 0.0
}

/// Time-ordered poses of one rigid body, all expressed in the same frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseStream {
    samples: Vec<ToolSample>,
    nominal_rate: f64,
    frame: FrameId,
}

impl PoseStream {
    pub fn new(samples: Vec<ToolSample>, nominal_rate: f64, frame: FrameId) -> Result<Self, StreamError> {
        if samples.is_empty() {
            return Err(StreamError::EmptyStream);
        }
        for (i, s) in samples.iter().enumerate() {
            if !valid_time(s.t) {
                return Err(StreamError::InvalidTimestamp { t: s.t });
            }
            if s.frame != frame {
                return Err(StreamError::FrameMismatch {
                    expected: frame,
                    found: s.frame,
                });
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(StreamError::Unordered { index: i });
            }
        }
        Ok(PoseStream {
            samples,
            nominal_rate,
            frame,
        })
    }

    /// Builds a stream whose nominal rate is estimated from the median
    /// sample period.
    pub fn with_estimated_rate(samples: Vec<ToolSample>, frame: FrameId) -> Result<Self, StreamError> {
        let rate = estimate_rate(samples.iter().map(|s| s.t));
        Self::new(samples, rate, frame)
    }

    pub fn samples(&self) -> &[ToolSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples per second; zero when unknown (single-sample streams).
    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    pub fn frame(&self) -> FrameId {
        self.frame
    }

    pub fn first_t(&self) -> f64 {
        self.samples[0].t
    }

    pub fn last_t(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Adds a constant clock offset to every timestamp.
    pub fn shifted(&self, offset: f64) -> Result<PoseStream, StreamError> {
        let samples = self
            .samples
            .iter()
            .map(|s| ToolSample { t: s.t + offset, ..*s })
            .collect();
        PoseStream::new(samples, self.nominal_rate, self.frame)
    }
}

/// Inverse of the median positive period, or zero with fewer than two samples.
pub fn estimate_rate(times: impl Iterator<Item = f64>) -> f64 {
    let times: Vec<f64> = times.collect();
    let mut periods: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    if periods.is_empty() {
        return 0.0;
    }
    periods.sort_by(f64::total_cmp);
    1.0 / periods[periods.len() / 2]
}

/// Robot-side log: tool poses in the robot frame plus the end-effector
/// wrench and joint state recorded on the same clock.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotLog {
    pub poses: PoseStream,
    /// One wrench per pose sample, same timestamps.
    pub wrenches: Vec<WrenchSample>,
    /// Joint angles in radians; carried through but unused by the metrics.
    pub joints: Vec<[f64; 7]>,
}

impl RobotLog {
    pub fn shifted(&self, offset: f64) -> Result<RobotLog, StreamError> {
        Ok(RobotLog {
            poses: self.poses.shifted(offset)?,
            wrenches: self
                .wrenches
                .iter()
                .map(|w| WrenchSample { t: w.t + offset, ..*w })
                .collect(),
            joints: self.joints.clone(),
        })
    }
}

/// Per-file clock offsets, seconds, added to every timestamp on load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochOffsets {
    #[serde(default)]
    pub robot: f64,
    #[serde(default)]
    pub vertebra: f64,
    #[serde(default)]
    pub platform: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingMeta {
    pub surgeon_id: String,
    pub vertebra: Vertebra,
    pub side: Side,
    #[serde(default)]
    pub epoch_offsets: EpochOffsets,
}

/// One drilling: robot log plus the two camera-tracked marker clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub meta: RecordingMeta,
    pub robot: RobotLog,
    /// Vertebra cluster pose in the camera frame.
    pub vertebra: PoseStream,
    /// Robot-platform cluster pose in the camera frame.
    pub platform: PoseStream,
}

/// Common time window `(max of first timestamps, min of last timestamps)`.
pub fn overlap_window(streams: &[&PoseStream]) -> Result<(f64, f64), StreamError> {
    if streams.is_empty() {
        return Err(StreamError::EmptyStream);
    }
    let start = streams.iter().map(|s| s.first_t()).fold(f64::NEG_INFINITY, f64::max);
    let end = streams.iter().map(|s| s.last_t()).fold(f64::INFINITY, f64::min);
    if start >= end {
        return Err(StreamError::NoOverlap { start, end });
    }
    Ok((start, end))
}

/// Index `i` of the bracketing interval `[t_i, t_{i+1}]` and the fraction
/// along it, or `None` for an exact hit on a sample.
enum Bracket {
    Exact(usize),
    Between(usize, f64),
}

fn bracket(times: &[f64], t: f64) -> Result<Bracket, StreamError> {
    let (start, end) = (times[0], times[times.len() - 1]);
    if !(t >= start && t <= end) {
        return Err(StreamError::OutOfWindow { t, start, end });
    }
    let i = times.partition_point(|&s| s < t);
    if times[i] == t {
        return Ok(Bracket::Exact(i));
    }
    let (t0, t1) = (times[i - 1], times[i]);
    Ok(Bracket::Between(i - 1, (t - t0) / (t1 - t0)))
}

fn check_requested(timestamps: &[f64]) -> Result<(), StreamError> {
    if timestamps.is_empty() {
        return Err(StreamError::EmptyStream);
    }
    for (i, w) in timestamps.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(StreamError::Unordered { index: i + 1 });
        }
    }
    Ok(())
}

/// Interpolates a stream at the requested (strictly increasing) timestamps.
///
/// Positions are linear between bracketing samples; orientations use
/// shortest-arc slerp. Timestamps outside the stream window are rejected.
pub fn resample(stream: &PoseStream, timestamps: &[f64]) -> Result<PoseStream, StreamError> {
    check_requested(timestamps)?;
    let times = stream.timestamps();
    let src = stream.samples();
    let mut out = Vec::with_capacity(timestamps.len());
    for &t in timestamps {
        let sample = match bracket(&times, t)? {
            Bracket::Exact(i) => src[i],
            Bracket::Between(i, a) => {
                let (s0, s1) = (&src[i], &src[i + 1]);
                ToolSample {
                    t,
                    position: s0.position + (s1.position - s0.position) * a,
                    orientation: s0.orientation.slerp(&s1.orientation, a),
                    frame: stream.frame(),
                }
            }
        };
        out.push(sample);
    }
    PoseStream::new(out, stream.nominal_rate(), stream.frame())
}

/// Linear interpolation of a wrench series at the requested timestamps.
pub fn resample_wrenches(wrenches: &[WrenchSample], timestamps: &[f64]) -> Result<Vec<WrenchSample>, StreamError> {
    if wrenches.is_empty() {
        return Err(StreamError::EmptyStream);
    }
    check_requested(timestamps)?;
    let times: Vec<f64> = wrenches.iter().map(|w| w.t).collect();
    for (i, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(StreamError::Unordered { index: i + 1 });
        }
    }
    timestamps
        .iter()
        .map(|&t| {
            Ok(match bracket(&times, t)? {
                Bracket::Exact(i) => wrenches[i],
                Bracket::Between(i, a) => {
                    let (w0, w1) = (&wrenches[i], &wrenches[i + 1]);
                    WrenchSample {
                        t,
                        force: w0.force + (w1.force - w0.force) * a,
                        torque: w0.torque + (w1.torque - w0.torque) * a,
                    }
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn stream(times: &[f64]) -> PoseStream {
        let samples = times
            .iter()
            .map(|&t| ToolSample {
                t,
                position: Vector3::new(t, 0.0, 0.0),
                orientation: UnitQuaternion::IDENTITY,
                frame: FrameId::Camera,
            })
            .collect();
        PoseStream::with_estimated_rate(samples, FrameId::Camera).unwrap()
    }

    #[test]
    fn overlap_cases() {
        let a = stream(&[0.0, 5.0, 10.0]);
        let b = stream(&[5.0, 12.0, 20.0]);
        assert_eq!(overlap_window(&[&a, &a]).unwrap(), (0.0, 10.0));
        assert_eq!(overlap_window(&[&a, &b]).unwrap(), (5.0, 10.0));
        let c = stream(&[0.0, 1.0]);
        let d = stream(&[2.0, 3.0]);
        assert!(matches!(overlap_window(&[&c, &d]), Err(StreamError::NoOverlap { .. })));
        assert!(overlap_window(&[]).is_err());
    }

    #[test]
    fn rejects_unordered_and_mixed_frames() {
        let mut s = stream(&[0.0, 1.0]).samples().to_vec();
        s[1].t = 0.0;
        assert!(matches!(
            PoseStream::new(s.clone(), 1.0, FrameId::Camera),
            Err(StreamError::Unordered { index: 1 })
        ));
        s[1].t = 1.0;
        s[1].frame = FrameId::Robot;
        assert!(matches!(
            PoseStream::new(s, 1.0, FrameId::Camera),
            Err(StreamError::FrameMismatch { .. })
        ));
        assert!(matches!(
            PoseStream::new(vec![], 1.0, FrameId::Camera),
            Err(StreamError::EmptyStream)
        ));
    }

    #[test]
    fn resample_constant_and_out_of_window() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 0.4);
        let samples = (0..5)
            .map(|i| ToolSample {
                t: i as f64,
                position: Vector3::new(1.0, -2.0, 3.5),
                orientation: q,
                frame: FrameId::Robot,
            })
            .collect();
        let s = PoseStream::new(samples, 1.0, FrameId::Robot).unwrap();
        let r = resample(&s, &[0.25, 1.7, 3.999]).unwrap();
        for x in r.samples() {
            assert_eq!(x.position, Vector3::new(1.0, -2.0, 3.5));
            assert!(x.orientation.angle_to(&q) < 1e-12);
        }
        assert!(matches!(resample(&s, &[4.5]), Err(StreamError::OutOfWindow { .. })));
        assert!(matches!(resample(&s, &[-0.1]), Err(StreamError::OutOfWindow { .. })));
        assert!(matches!(resample(&s, &[2.0, 1.0]), Err(StreamError::Unordered { .. })));
    }

    #[test]
    fn slerp_midpoint_through_resample() {
        let q1 = UnitQuaternion::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        let samples = vec![
            ToolSample {
                t: 0.0,
                position: Vector3::zeros(),
                orientation: UnitQuaternion::IDENTITY,
                frame: FrameId::Robot,
            },
            ToolSample {
                t: 1.0,
                position: Vector3::zeros(),
                orientation: q1,
                frame: FrameId::Robot,
            },
        ];
        let s = PoseStream::new(samples, 1.0, FrameId::Robot).unwrap();
        let mid = resample(&s, &[0.5]).unwrap().samples()[0].orientation;
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z(), FRAC_PI_2 / 2.0);
        assert!(mid.angle_to(&expected) < 1e-9);
    }

    #[test]
    fn wrench_interpolation() {
        let w = vec![
            WrenchSample {
                t: 0.0,
                force: Vector3::new(0.0, 2.0, 0.0),
                torque: Vector3::zeros(),
            },
            WrenchSample {
                t: 2.0,
                force: Vector3::new(4.0, 2.0, 0.0),
                torque: Vector3::new(0.0, 0.0, 1.0),
            },
        ];
        let r = resample_wrenches(&w, &[0.5, 2.0]).unwrap();
        assert_eq!(r[0].force, Vector3::new(1.0, 2.0, 0.0));
        assert_eq!(r[0].torque, Vector3::new(0.0, 0.0, 0.25));
        assert_eq!(r[1], w[1]);
        assert!(resample_wrenches(&w, &[2.5]).is_err());
    }

    #[test]
    fn rate_estimate_uses_median_period() {
        let s = stream(&[0.0, 0.01, 0.02, 0.05, 0.06]);
        assert!((s.nominal_rate() - 100.0).abs() < 1e-9);
        assert_eq!(stream(&[1.0]).nominal_rate(), 0.0);
    }
}
