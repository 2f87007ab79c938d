//! SE(3) transform algebra, relative motions, and pose-error metrics.
//!
//! Internal units are meters, seconds, radians throughout. Reporting code
//! converts to millimeters and degrees at the edge.

use nalgebra::{Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used for "equals identity" assertions on transform chains.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("timestamps not strictly increasing: earlier {earlier} >= later {later}")]
    NonMonotonicTimestamps { earlier: f64, later: f64 },
}

/// An SE(3) element stored as a unit quaternion plus a translation in meters.
///
/// The quaternion is renormalized and canonicalized to the w >= 0 hemisphere
/// on every construction, so `q` and `-q` inputs produce identical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: canonicalize(rotation),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(w: f64, x: f64, y: f64, z: f64, t: [f64; 3]) -> Self {
        let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
        Self::new(q, Vector3::new(t[0], t[1], t[2]))
    }

    /// Rotation about `axis` by `angle` radians, plus translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
        Self::new(q, translation)
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    /// 4x4 homogeneous matrix form.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_rotation_matrix(r: &Rotation3<f64>, t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::from_rotation_matrix(r), t)
    }

    /// Apply the transform to a point.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians, in [0, pi].
    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

fn canonicalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let mut inner = q.into_inner();
    if inner.w < 0.0 {
        inner = -inner;
    }
    UnitQuaternion::new_normalize(inner)
}

/// `a` then `b` applied from the right: the 4x4 product `a * b`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform::new(
        a.rotation * b.rotation,
        a.rotation * b.translation + a.translation,
    )
}

pub fn inverse(t: &RigidTransform) -> RigidTransform {
    let rot_inv = t.rotation.inverse();
    RigidTransform::new(rot_inv, -(rot_inv * t.translation))
}

/// A timestamped pose; elements of controller/marker/manikin streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub timestamp: f64,
    pub pose: RigidTransform,
}

impl TimedPose {
    pub fn new(timestamp: f64, pose: RigidTransform) -> Self {
        Self { timestamp, pose }
    }
}

/// Relative motion `pose(later) * pose(earlier)^-1` between two samples of
/// one stream.
pub fn relative_motion(
    earlier: &TimedPose,
    later: &TimedPose,
) -> Result<RigidTransform, GeometryError> {
    if later.timestamp <= earlier.timestamp {
        return Err(GeometryError::NonMonotonicTimestamps {
            earlier: earlier.timestamp,
            later: later.timestamp,
        });
    }
    Ok(compose(&later.pose, &inverse(&earlier.pose)))
}

/// Split translation/rotation error between two poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    /// Euclidean translation error in meters.
    pub translation_error: f64,
    /// Geodesic rotation error in radians, in [0, pi].
    pub rotation_error: f64,
}

pub fn pose_error(estimate: &RigidTransform, truth: &RigidTransform) -> PoseError {
    let translation_error = (estimate.translation - truth.translation).norm();
    let rotation_error = estimate.rotation.angle_to(&truth.rotation);
    PoseError {
        translation_error,
        rotation_error,
    }
}
