//! Position and orientation error of the drilling tool against a planned
//! trajectory, expressed in the vertebra frame.
//!
//! Position error is the perpendicular rejection of the displacement from
//! the anchor point with respect to the planned direction `U`:
//!
//! ```text
//! d   = (P_a - P_o) - ((P_a - P_o) · U) U
//! e_p = |d|
//! ```
//!
//! The printed form of this formula carries a `+` in place of the `-`; that
//! variant is not perpendicular to `U` and is treated as a typo.
//!
//! Orientation error is the rotation vector (axis scaled by angle) of
//! `R_e = R_d · R_aᵀ`, reported in degrees.

use std::f64::consts::PI;
use std::io::{self, Read, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{FrameId, RotationMatrix, UnitQuaternion};
use crate::io::fmt_f64;
use crate::labels::{Side, Vertebra};
use crate::streams::{PoseStream, SynchronizedRecording};

/// Below this angle (rad) the rotation vector is taken from the first-order
/// series instead of the sine formula.
pub const SMALL_ANGLE: f64 = 1e-8;
/// Within this distance of π (rad) the axis is read from the symmetric part.
pub const NEAR_HALF_TURN: f64 = 1e-6;

pub const ERROR_HEADER: &str = "t,dev_x,dev_y,dev_z,e_p,eo_x,eo_y,eo_z,depth";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("direction vector has norm {norm}, expected 1")]
    NonUnitDirection { norm: f64 },
    #[error("entry and exit points coincide")]
    DegeneratePlan,
    #[error("desired orientation drill axis is {angle:e} rad off the planned direction")]
    AxisMismatch { angle: f64 },
    #[error("recording contains no samples")]
    EmptyRecording,
    #[error("poses are expressed in the {0} frame, expected vertebra")]
    WrongFrame(FrameId),
    #[error("error CSV: {0}")]
    Csv(String),
}

/// Which point the position error is measured from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// First streamed tool position.
    #[default]
    FirstSample,
    PlannedEntry,
}

/// Planned drilling line for one vertebra side, in the vertebra frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    pub vertebra: Vertebra,
    pub side: Side,
    entry: Vector3<f64>,
    exit: Vector3<f64>,
    desired_orientation: UnitQuaternion,
    direction: Vector3<f64>,
}

/// Local tool axis along which the drill bit points.
pub fn drill_axis(q: &UnitQuaternion) -> Vector3<f64> {
    q.to_rotation().axis(2)
}

impl TrajectoryPlan {
    pub fn new(
        vertebra: Vertebra,
        side: Side,
        entry: Vector3<f64>,
        exit: Vector3<f64>,
        desired_orientation: UnitQuaternion,
    ) -> Result<Self, MetricsError> {
        let span = exit - entry;
        let len = span.norm();
        if !(len > 1e-6) {
            return Err(MetricsError::DegeneratePlan);
        }
        let direction = span / len;
        let axis = drill_axis(&desired_orientation);
        let angle = axis.cross(&direction).norm().atan2(axis.dot(&direction));
        if angle > 1e-6 {
            return Err(MetricsError::AxisMismatch { angle });
        }
        Ok(TrajectoryPlan {
            vertebra,
            side,
            entry,
            exit,
            desired_orientation,
            direction,
        })
    }

    /// Plan whose desired orientation is `reference` carried onto the
    /// planned direction by the minimal rotation (the auto-alignment pose).
    pub fn from_points(
        vertebra: Vertebra,
        side: Side,
        entry: Vector3<f64>,
        exit: Vector3<f64>,
        reference: &UnitQuaternion,
    ) -> Result<Self, MetricsError> {
        let span = exit - entry;
        if !(span.norm() > 1e-6) {
            return Err(MetricsError::DegeneratePlan);
        }
        let desired = aligned_orientation(reference, &span);
        Self::new(vertebra, side, entry, exit, desired)
    }

    pub fn entry(&self) -> Vector3<f64> {
        self.entry
    }

    pub fn exit(&self) -> Vector3<f64> {
        self.exit
    }

    pub fn desired_orientation(&self) -> UnitQuaternion {
        self.desired_orientation
    }

    /// Unit vector `U` from entry to exit.
    pub fn direction(&self) -> Vector3<f64> {
        self.direction
    }
}

/// `reference` rotated by the minimal rotation that brings its drill axis
/// onto `direction`; a half turn about the reference +x axis when the two
/// are opposite.
pub fn aligned_orientation(reference: &UnitQuaternion, direction: &Vector3<f64>) -> UnitQuaternion {
    let r = reference.to_rotation();
    let q = UnitQuaternion::rotation_between(&r.axis(2), direction, &r.axis(0));
    q * *reference
}

/// Perpendicular deviation of `actual` from the line through `anchor` along `u`.
pub fn position_error(
    actual: &Vector3<f64>,
    anchor: &Vector3<f64>,
    u: &Vector3<f64>,
) -> Result<(Vector3<f64>, f64), MetricsError> {
    let norm = u.norm();
    if !((norm - 1.0).abs() <= 1e-9) {
        return Err(MetricsError::NonUnitDirection { norm });
    }
    let d = actual - anchor;
    let deviation = d - u * d.dot(u);
    Ok((deviation, deviation.norm()))
}

fn skew_vector(r: &RotationMatrix) -> Vector3<f64> {
    let m = r.matrix();
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// The general branch. `|skew| = 2 sin θ`, so this is `θ / (2 sin θ) · skew`
/// with the magnitude taken from the atan2 angle instead of the sine.
fn sine_formula(skew: &Vector3<f64>, theta: f64) -> Vector3<f64> {
    skew * (theta / skew.norm())
}

/// First-order series of the sine formula, `skew / 2 · (1 + θ²/6)`.
fn small_angle_series(skew: &Vector3<f64>, theta: f64) -> Vector3<f64> {
    skew * (0.5 * (1.0 + theta * theta / 6.0))
}

/// Near a half turn the skew part vanishes; the axis comes from the
/// dominant column of the symmetric part of `(R + I) / 2`, signed to agree
/// with whatever skew remains.
fn half_turn_axis(r: &RotationMatrix, skew: &Vector3<f64>) -> Vector3<f64> {
    let m = r.matrix();
    let b = (m + m.transpose()) * 0.25 + nalgebra::Matrix3::identity() * 0.5;
    let k = (0..3).max_by(|&i, &j| b[(i, i)].total_cmp(&b[(j, j)])).unwrap_or(0);
    let mut axis = b.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(skew) < 0.0 {
        axis = -axis;
    }
    axis
}

/// Rotation vector (radians) of a rotation matrix.
pub fn rotation_vector(r: &RotationMatrix) -> Vector3<f64> {
    let skew = skew_vector(r);
    let cos = (r.matrix().trace() - 1.0) / 2.0;
    let theta = (skew.norm() / 2.0).atan2(cos);
    if theta < SMALL_ANGLE {
        small_angle_series(&skew, theta)
    } else if PI - theta < NEAR_HALF_TURN {
        half_turn_axis(r, &skew) * theta
    } else {
        sine_formula(&skew, theta)
    }
}

/// Orientation error vector in degrees: rotation vector of `R_d · R_aᵀ`.
pub fn orientation_error(actual: &RotationMatrix, desired: &RotationMatrix) -> Vector3<f64> {
    let re = *desired * actual.transpose();
    rotation_vector(&re).map(f64::to_degrees)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    /// Perpendicular deviation, mm, vertebra frame.
    pub deviation: Vector3<f64>,
    /// `|deviation|`, mm.
    pub e_p: f64,
    /// Orientation error vector, degrees.
    pub e_o: Vector3<f64>,
    /// Signed progress along `U` from the anchor, mm.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub plan: TrajectoryPlan,
    pub anchor: Vector3<f64>,
    pub samples: Vec<ErrorSample>,
}

impl ErrorSeries {
    /// Index of the first sample at or past the anchor (`depth >= 0`).
    pub fn phase_start(&self) -> Option<usize> {
        self.samples.iter().position(|s| s.depth >= 0.0)
    }

    pub fn max_e_p(&self) -> f64 {
        self.samples.iter().map(|s| s.e_p).fold(0.0, f64::max)
    }

    /// Largest orientation error magnitude, degrees.
    pub fn max_e_o(&self) -> f64 {
        self.samples.iter().map(|s| s.e_o.norm()).fold(0.0, f64::max)
    }
}

/// Samples retained for statistics: all of them, or only `depth >= 0` when gated.
pub fn drilling_phase(samples: &[ErrorSample], gated: bool) -> Vec<ErrorSample> {
    samples.iter().filter(|s| !gated || s.depth >= 0.0).copied().collect()
}

pub fn error_series(
    sync: &SynchronizedRecording,
    plan: &TrajectoryPlan,
    anchor_mode: AnchorMode,
) -> Result<ErrorSeries, MetricsError> {
    error_series_from_poses(&sync.poses, plan, anchor_mode)
}

/// Per-timestamp errors of a vertebra-frame tool pose stream against `plan`.
pub fn error_series_from_poses(
    poses: &PoseStream,
    plan: &TrajectoryPlan,
    anchor_mode: AnchorMode,
) -> Result<ErrorSeries, MetricsError> {
    if poses.frame() != FrameId::Vertebra {
        return Err(MetricsError::WrongFrame(poses.frame()));
    }
    let first = poses.samples().first().ok_or(MetricsError::EmptyRecording)?;
    let anchor = match anchor_mode {
        AnchorMode::FirstSample => first.position,
        AnchorMode::PlannedEntry => plan.entry(),
    };
    let u = plan.direction();
    let desired = plan.desired_orientation().to_rotation();
    let samples = poses
        .samples()
        .iter()
        .map(|s| {
            let (deviation, e_p) = position_error(&s.position, &anchor, &u)?;
            Ok(ErrorSample {
                t: s.t,
                deviation,
                e_p,
                e_o: orientation_error(&s.orientation.to_rotation(), &desired),
                depth: (s.position - anchor).dot(&u),
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(ErrorSeries {
        plan: plan.clone(),
        anchor,
        samples,
    })
}

pub fn write_error_csv<W: Write>(mut w: W, samples: &[ErrorSample]) -> io::Result<()> {
    writeln!(w, "{ERROR_HEADER}")?;
    for s in samples {
        let fields = [
            s.t,
            s.deviation.x,
            s.deviation.y,
            s.deviation.z,
            s.e_p,
            s.e_o.x,
            s.e_o.y,
            s.e_o.z,
            s.depth,
        ];
        let line: Vec<String> = fields.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_error_csv<R: Read>(reader: R) -> Result<Vec<ErrorSample>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| MetricsError::Csv(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != ERROR_HEADER {
        return Err(MetricsError::Csv(format!("unexpected header `{header}`")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MetricsError::Csv(format!("row {}: {e}", i + 1)))?;
        let v = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| MetricsError::Csv(format!("row {}: {e}", i + 1)))?;
        out.push(ErrorSample {
            t: v[0],
            deviation: Vector3::new(v[1], v[2], v[3]),
            e_p: v[4],
            e_o: Vector3::new(v[5], v[6], v[7]),
            depth: v[8],
        });
    }
    Ok(out)
}
