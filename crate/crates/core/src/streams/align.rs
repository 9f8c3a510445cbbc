use log::warn;

use super::{
    overlap_window, resample, resample_wrenches, PoseStream, Recording, RecordingMeta, StreamError, ToolSample,
    WrenchSample,
};
use crate::frames::{chain_to_vertebra, FrameId, RigidTransform};

/// Gaps longer than this many nominal periods are reported.
pub const GAP_WARNING_PERIODS: f64 = 3.0;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlignOptions {
    /// When set, any gap longer than this many seconds inside the analysis
    /// window is an error instead of a warning.
    pub max_gap: Option<f64>,
}

/// Tool poses and wrenches expressed in the vertebra frame on the
/// vertebra-cluster timebase.
#[derive(Debug, Clone, PartialEq)]
pub struct SynchronizedRecording {
    pub meta: RecordingMeta,
    pub poses: PoseStream,
    /// Wrenches rotated into vertebra-frame axes, one per pose.
    pub wrenches: Vec<WrenchSample>,
    pub warnings: Vec<String>,
}

/// Checks sample spacing inside `[start, end]`.
///
/// Returns a warning per gap above [`GAP_WARNING_PERIODS`] nominal periods,
/// or an error for the first gap above `max_gap`.
pub fn check_gaps(
    name: &str,
    stream: &PoseStream,
    (start, end): (f64, f64),
    max_gap: Option<f64>,
) -> Result<Vec<String>, StreamError> {
    let mut warnings = Vec::new();
    let rate = stream.nominal_rate();
    for w in stream.samples().windows(2) {
        let (a, b) = (w[0].t, w[1].t);
        if b < start || a > end {
            continue;
        }
        let gap = b - a;
        if let Some(limit) = max_gap {
            if gap > limit {
                return Err(StreamError::GapTooLarge {
                    stream: name.to_string(),
                    t: a,
                    gap,
                    limit,
                });
            }
        }
        if rate > 0.0 && gap > GAP_WARNING_PERIODS / rate {
            let msg = format!("{name} stream: {gap:.4} s gap after t = {a:.4} s interpolated across");
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(warnings)
}

/// Resamples every stream onto the vertebra-cluster clock restricted to the
/// common window and expresses the tool pose in the vertebra frame.
///
/// Per timestamp, `T_RV = calibration · platform⁻¹ · vertebra` and the tool
/// pose becomes `T_RV⁻¹ · T_R,tool`.
pub fn align(
    rec: &Recording,
    calibration: &RigidTransform,
    opts: &AlignOptions,
) -> Result<SynchronizedRecording, StreamError> {
    for (expected, s) in [
        (FrameId::Robot, &rec.robot.poses),
        (FrameId::Camera, &rec.vertebra),
        (FrameId::Camera, &rec.platform),
    ] {
        if s.frame() != expected {
            return Err(StreamError::FrameMismatch {
                expected,
                found: s.frame(),
            });
        }
    }
    let window = overlap_window(&[&rec.robot.poses, &rec.vertebra, &rec.platform])?;
    let mut warnings = Vec::new();
    for (name, s) in [
        ("robot", &rec.robot.poses),
        ("vertebra", &rec.vertebra),
        ("platform", &rec.platform),
    ] {
        warnings.extend(check_gaps(name, s, window, opts.max_gap)?);
    }

    let timebase: Vec<f64> = rec
        .vertebra
        .samples()
        .iter()
        .map(|s| s.t)
        .filter(|&t| t >= window.0 && t <= window.1)
        .collect();
    if timebase.is_empty() {
        return Err(StreamError::NoOverlap {
            start: window.0,
            end: window.1,
        });
    }

    let vertebra = resample(&rec.vertebra, &timebase)?;
    let platform = resample(&rec.platform, &timebase)?;
    let tool = resample(&rec.robot.poses, &timebase)?;
    let wrench = resample_wrenches(&rec.robot.wrenches, &timebase)?;

    let mut poses = Vec::with_capacity(timebase.len());
    let mut wrenches = Vec::with_capacity(timebase.len());
    for i in 0..timebase.len() {
        let robot_vertebra = chain_to_vertebra(
            calibration,
            &platform.samples()[i].pose().inverse(),
            &vertebra.samples()[i].pose(),
        );
        let vertebra_robot = robot_vertebra.inverse();
        let tool_in_vertebra = vertebra_robot.compose(&tool.samples()[i].pose());
        poses.push(ToolSample::from_pose(timebase[i], &tool_in_vertebra, FrameId::Vertebra));
        let w = &wrench[i];
        wrenches.push(WrenchSample {
            t: timebase[i],
            force: vertebra_robot.transform_vector(&w.force),
            torque: vertebra_robot.transform_vector(&w.torque),
        });
    }

    Ok(SynchronizedRecording {
        meta: rec.meta.clone(),
        poses: PoseStream::new(poses, rec.vertebra.nominal_rate(), FrameId::Vertebra)?,
        wrenches,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::UnitQuaternion;
    use crate::labels::{Side, Vertebra};
    use crate::streams::{EpochOffsets, RobotLog};
    use nalgebra::Vector3;

    fn meta() -> RecordingMeta {
        RecordingMeta {
            surgeon_id: "S1".into(),
            vertebra: Vertebra::C3,
            side: Side::Left,
            epoch_offsets: EpochOffsets::default(),
        }
    }

    fn static_stream(n: usize, rate: f64, offset: Vector3<f64>) -> PoseStream {
        let samples = (0..n)
            .map(|i| ToolSample {
                t: i as f64 / rate,
                position: offset,
                orientation: UnitQuaternion::IDENTITY,
                frame: FrameId::Camera,
            })
            .collect();
        PoseStream::new(samples, rate, FrameId::Camera).unwrap()
    }

    fn robot(n: usize, rate: f64) -> RobotLog {
        let samples: Vec<_> = (0..n)
            .map(|i| ToolSample {
                t: i as f64 / rate,
                position: Vector3::new(1.0, 2.0, i as f64 * 0.01),
                orientation: UnitQuaternion::from_axis_angle(&Vector3::x(), 0.001 * i as f64),
                frame: FrameId::Robot,
            })
            .collect();
        RobotLog {
            wrenches: samples.iter().map(|s| WrenchSample::zero(s.t)).collect(),
            joints: vec![[0.0; 7]; n],
            poses: PoseStream::new(samples, rate, FrameId::Robot).unwrap(),
        }
    }

    #[test]
    fn identity_frames_reproduce_robot_stream() {
        let rec = Recording {
            meta: meta(),
            robot: robot(120, 120.0),
            vertebra: static_stream(120, 120.0, Vector3::zeros()),
            platform: static_stream(120, 120.0, Vector3::zeros()),
        };
        let sync = align(&rec, &RigidTransform::identity(), &AlignOptions::default()).unwrap();
        assert_eq!(sync.poses.len(), 120);
        for (a, b) in sync.poses.samples().iter().zip(rec.robot.poses.samples()) {
            assert_eq!(a.t, b.t);
            assert!((a.position - b.position).norm() < 1e-12);
            assert!(a.orientation.angle_to(&b.orientation) < 1e-12);
            assert_eq!(a.frame, FrameId::Vertebra);
        }
        assert!(sync.warnings.is_empty());
    }

    #[test]
    fn vertebra_offset_shifts_tool_positions() {
        let base = Recording {
            meta: meta(),
            robot: robot(1000, 1000.0),
            vertebra: static_stream(120, 120.0, Vector3::zeros()),
            platform: static_stream(120, 120.0, Vector3::zeros()),
        };
        let shifted = Recording {
            vertebra: static_stream(120, 120.0, Vector3::new(10.0, 0.0, 0.0)),
            ..base.clone()
        };
        let a = align(&base, &RigidTransform::identity(), &AlignOptions::default()).unwrap();
        let b = align(&shifted, &RigidTransform::identity(), &AlignOptions::default()).unwrap();
        for (p, q) in a.poses.samples().iter().zip(b.poses.samples()) {
            assert!((q.position - p.position - Vector3::new(-10.0, 0.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn disjoint_streams_do_not_overlap() {
        let rec = Recording {
            meta: meta(),
            robot: robot(10, 1000.0),
            vertebra: static_stream(120, 120.0, Vector3::zeros()).shifted(5.0).unwrap(),
            platform: static_stream(120, 120.0, Vector3::zeros()),
        };
        let err = align(&rec, &RigidTransform::identity(), &AlignOptions::default()).unwrap_err();
        assert!(matches!(err, StreamError::NoOverlap { .. }));
    }

    #[test]
    fn gaps_warn_or_fail() {
        let mut samples = static_stream(120, 120.0, Vector3::zeros()).samples().to_vec();
        samples.drain(50..60);
        let gappy = PoseStream::new(samples, 120.0, FrameId::Camera).unwrap();
        let rec = Recording {
            meta: meta(),
            robot: robot(1000, 1000.0),
            vertebra: gappy,
            platform: static_stream(120, 120.0, Vector3::zeros()),
        };
        let sync = align(&rec, &RigidTransform::identity(), &AlignOptions::default()).unwrap();
        assert_eq!(sync.warnings.len(), 1);
        let strict = AlignOptions { max_gap: Some(0.05) };
        assert!(matches!(
            align(&rec, &RigidTransform::identity(), &strict),
            Err(StreamError::GapTooLarge { .. })
        ));
    }
}
