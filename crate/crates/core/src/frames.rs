//! Rigid-body transform algebra and the camera/platform/vertebra/robot frame chain.
//!
//! Transforms follow the "pose of frame j expressed in frame i" convention:
//! `T_ij` maps coordinates given in frame `j` into frame `i`, so chains read
//! left to right (`T_ik = T_ij * T_jk`).

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance applied when validating rotations and quaternions read from
/// external input (files, configuration).
pub const INPUT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("rotation matrix is not orthonormal (max deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },
    #[error("rotation matrix has determinant {det}, expected +1")]
    NotProperRotation { det: f64 },
    #[error("quaternion norm {norm} deviates from 1 beyond tolerance")]
    NonUnitQuaternion { norm: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Coordinate frames taking part in the registration chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameId {
    Robot,
    Vertebra,
    RobotPlatform,
    Camera,
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FrameId::Robot => "robot",
            FrameId::Vertebra => "vertebra",
            FrameId::RobotPlatform => "robot_platform",
            FrameId::Camera => "camera",
        };
        f.write_str(name)
    }
}

/// Unit quaternion with the scalar part kept non-negative.
///
/// Both `q` and `-q` describe the same rotation; canonicalizing on
/// construction makes equality comparisons meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Validates the norm against [`INPUT_TOLERANCE`], then renormalizes and
    /// canonicalizes the sign.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, FrameError> {
        Self::with_tolerance(w, x, y, z, INPUT_TOLERANCE)
    }

    pub fn with_tolerance(w: f64, x: f64, y: f64, z: f64, tol: f64) -> Result<Self, FrameError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(FrameError::NonFinite("quaternion"));
        }
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if (norm - 1.0).abs() > tol {
            return Err(FrameError::NonUnitQuaternion { norm });
        }
        Ok(Self::normalized(w, x, y, z))
    }

    /// Normalizes any non-zero quaternion. Used for internally produced values.
    pub(crate) fn normalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        let s = if w < 0.0 { -1.0 / n } else { 1.0 / n };
        UnitQuaternion {
            w: w * s,
            x: x * s,
            y: y * s,
            z: z * s,
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let a = axis / n;
        Self::normalized(c, a.x * s, a.y * s, a.z * s)
    }

    /// Rotation by a rotation vector (axis scaled by angle in radians).
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        Self::from_axis_angle(v, v.norm())
    }

    /// Minimal rotation taking unit direction `from` onto unit direction `to`.
    ///
    /// For anti-parallel inputs the half turn is taken about `fallback_axis`,
    /// which must be perpendicular to `from`.
    pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>, fallback_axis: &Vector3<f64>) -> Self {
        let a = from.normalize();
        let b = to.normalize();
        let dot = a.dot(&b);
        if 1.0 + dot < 1e-12 {
            return Self::from_axis_angle(fallback_axis, std::f64::consts::PI);
        }
        let c = a.cross(&b);
        Self::normalized(1.0 + dot, c.x, c.y, c.z)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Self::normalized(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotation angle in `[0, π]`, radians.
    pub fn angle(&self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }

    /// Angle of the relative rotation between `self` and `other`, radians.
    pub fn angle_to(&self, other: &UnitQuaternion) -> f64 {
        (self.conjugate() * *other).angle()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_rotation(&self) -> RotationMatrix {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let m = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        );
        RotationMatrix(m)
    }

    /// Shortest-arc spherical interpolation; `t = 0` gives `self`, `t = 1` gives `other`.
    pub fn slerp(&self, other: &UnitQuaternion, t: f64) -> UnitQuaternion {
        let a = [self.w, self.x, self.y, self.z];
        let mut b = [other.w, other.x, other.y, other.z];
        let dot: f64 = a.iter().zip(&b).map(|(p, q)| p * q).sum();
        if dot < 0.0 {
            b.iter_mut().for_each(|v| *v = -*v);
        }
        // Half the angle between the two, computed from chord lengths so
        // that it stays accurate for nearly equal inputs.
        let diff: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let sum: f64 = a.iter().zip(&b).map(|(p, q)| (p + q).powi(2)).sum::<f64>().sqrt();
        let omega = 2.0 * diff.atan2(sum);
        let (wa, wb) = if omega < 1e-15 {
            (1.0 - t, t)
        } else {
            let s = omega.sin();
            (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s)
        };
        Self::normalized(
            wa * a[0] + wb * b[0],
            wa * a[1] + wb * b[1],
            wa * a[2] + wb * b[2],
            wa * a[3] + wb * b[3],
        )
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product; `a * b` applies `b` first.
    fn mul(self, b: UnitQuaternion) -> UnitQuaternion {
        let a = self;
        UnitQuaternion::normalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

/// Proper orthonormal 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    /// Validates orthonormality and handedness against [`INPUT_TOLERANCE`].
    /// Invalid input is rejected, never re-orthonormalized.
    pub fn try_new(m: Matrix3<f64>) -> Result<Self, FrameError> {
        Self::try_new_with_tolerance(m, INPUT_TOLERANCE)
    }

    pub fn try_new_with_tolerance(m: Matrix3<f64>, tol: f64) -> Result<Self, FrameError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(FrameError::NonFinite("rotation matrix"));
        }
        let deviation = orthonormality_deviation(&m);
        if deviation > tol {
            return Err(FrameError::NotOrthonormal { deviation });
        }
        let det = m.determinant();
        if (det - 1.0).abs() > tol {
            return Err(FrameError::NotProperRotation { det });
        }
        Ok(RotationMatrix(m))
    }

    /// Builds from a row-major array of nine entries.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, FrameError> {
        Self::try_new(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        UnitQuaternion::from_axis_angle(axis, angle).to_rotation()
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Entry `r_ij` with zero-based indices.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Column `k` of the matrix: the image of the k-th local axis.
    pub fn axis(&self, k: usize) -> Vector3<f64> {
        self.0.column(k).into_owned()
    }

    /// Rotation angle in `[0, π]`, radians.
    pub fn angle(&self) -> f64 {
        let m = &self.0;
        let skew = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let cos = (m.trace() - 1.0) / 2.0;
        (skew.norm() / 2.0).atan2(cos)
    }

    /// Matrix to quaternion (Shepperd's method, branch on the largest pivot).
    pub fn to_quaternion(&self) -> UnitQuaternion {
        let m = &self.0;
        let tr = m.trace();
        let (w, x, y, z);
        if tr > m[(0, 0)] && tr > m[(1, 1)] && tr > m[(2, 2)] {
            let s = (1.0 + tr).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        UnitQuaternion::normalized(w, x, y, z)
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Largest entrywise deviation of `mᵀm` from the identity.
pub fn orthonormality_deviation(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// Rigid transform: rotation plus translation in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: RotationMatrix,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: RotationMatrix::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: RotationMatrix, translation: Vector3<f64>) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(RotationMatrix::identity(), translation)
    }

    pub fn from_quaternion(q: &UnitQuaternion, translation: Vector3<f64>) -> Self {
        Self::new(q.to_rotation(), translation)
    }

    pub fn quaternion(&self) -> UnitQuaternion {
        self.rotation.to_quaternion()
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.rotate(&self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    /// Rotates a free vector (force, torque, direction); translation is ignored.
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(v)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// Robot-to-vertebra transform `T_RV = T_RP · T_Pc · T_cV`.
///
/// `platform_camera` is the inverse of the camera's measurement of the
/// platform cluster; `camera_vertebra` is the camera's measurement of the
/// vertebra cluster.
pub fn chain_to_vertebra(
    robot_platform: &RigidTransform,
    platform_camera: &RigidTransform,
    camera_vertebra: &RigidTransform,
) -> RigidTransform {
    robot_platform.compose(platform_camera).compose(camera_vertebra)
}
