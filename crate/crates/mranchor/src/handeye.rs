//! Eye-to-hand calibration: solve the fixed headset-to-camera transform
//! from paired controller/marker pose streams (AX = XB).
//!
//! The rotation is solved first through the Tsai-Lenz modified-Rodrigues
//! linear system, then the translation through linear least squares over
//! the same motion pairs.

use nalgebra::{DMatrix, DVector, Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    compose, pose_error, relative_motion, PoseError, RigidTransform, TimedPose,
};
#[cfg(test)]
use crate::geometry::inverse;

/// Maximum timestamp mismatch tolerated when aligning the two streams.
pub const STREAM_ALIGN_TOL: f64 = 0.005;

/// Condition-number bound above which the rotation normal equations are
/// abandoned for an SVD solve of the stacked system.
const NORMAL_EQ_COND_LIMIT: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandEyeError {
    #[error("pose streams incompatible: {0}")]
    StreamMismatch(String),
    #[error("fewer than 2 motion pairs survive the min-rotation filter")]
    InsufficientMotion,
    #[error("need at least 2 motion pairs, got {0}")]
    InsufficientPairs(usize),
    #[error("all rotation axes parallel within 1 degree; motion does not constrain the solution")]
    DegenerateMotion,
}

/// One AX = XB constraint: `a` is the headset-side relative motion, `b`
/// the camera-side relative motion over the same frame interval.
#[derive(Debug, Clone, Copy)]
pub struct MotionPair {
    pub a: RigidTransform,
    pub b: RigidTransform,
    /// Rotation angle of `a` in radians; similar transforms share it with `b`.
    pub rotation_angle: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// The solved headset-to-camera transform.
    pub x: RigidTransform,
    /// RMS rotation discrepancy over the input pairs, radians.
    pub rotation_residual: f64,
    /// RMS translation discrepancy over the input pairs, meters.
    pub translation_residual: f64,
    pub pairs_used: usize,
}

/// Build consecutive-frame motion pairs from time-aligned streams.
///
/// Pairs whose headset-side rotation angle falls below `min_rotation` are
/// discarded; near-zero rotations carry no usable constraint.
pub fn build_motion_pairs(
    headset_stream: &[TimedPose],
    marker_stream: &[TimedPose],
    min_rotation: f64,
) -> Result<Vec<MotionPair>, HandEyeError> {
    if headset_stream.len() != marker_stream.len() {
        return Err(HandEyeError::StreamMismatch(format!(
            "lengths {} vs {}",
            headset_stream.len(),
            marker_stream.len()
        )));
    }
    for (h, m) in headset_stream.iter().zip(marker_stream) {
        if (h.timestamp - m.timestamp).abs() > STREAM_ALIGN_TOL {
            return Err(HandEyeError::StreamMismatch(format!(
                "timestamps {} vs {} differ by more than {STREAM_ALIGN_TOL} s",
                h.timestamp, m.timestamp
            )));
        }
    }
    let mut pairs = Vec::new();
    for i in 1..headset_stream.len() {
        let a = relative_motion(&headset_stream[i - 1], &headset_stream[i])
            .map_err(|e| HandEyeError::StreamMismatch(e.to_string()))?;
        let b = relative_motion(&marker_stream[i - 1], &marker_stream[i])
            .map_err(|e| HandEyeError::StreamMismatch(e.to_string()))?;
        let rotation_angle = a.rotation_angle();
        if rotation_angle < min_rotation {
            continue;
        }
        pairs.push(MotionPair {
            a,
            b,
            rotation_angle,
        });
    }
    if pairs.len() < 2 {
        return Err(HandEyeError::InsufficientMotion);
    }
    Ok(pairs)
}

/// All-pairs variant (every i < j), for conditioning experiments.
pub fn build_motion_pairs_all(
    headset_stream: &[TimedPose],
    marker_stream: &[TimedPose],
    min_rotation: f64,
) -> Result<Vec<MotionPair>, HandEyeError> {
    if headset_stream.len() != marker_stream.len() {
        return Err(HandEyeError::StreamMismatch(format!(
            "lengths {} vs {}",
            headset_stream.len(),
            marker_stream.len()
        )));
    }
    let mut pairs = Vec::new();
    for i in 0..headset_stream.len() {
        for j in (i + 1)..headset_stream.len() {
            let a = relative_motion(&headset_stream[i], &headset_stream[j])
                .map_err(|e| HandEyeError::StreamMismatch(e.to_string()))?;
            let b = relative_motion(&marker_stream[i], &marker_stream[j])
                .map_err(|e| HandEyeError::StreamMismatch(e.to_string()))?;
            let rotation_angle = a.rotation_angle();
            if rotation_angle < min_rotation {
                continue;
            }
            pairs.push(MotionPair {
                a,
                b,
                rotation_angle,
            });
        }
    }
    if pairs.len() < 2 {
        return Err(HandEyeError::InsufficientMotion);
    }
    Ok(pairs)
}

/// Modified Rodrigues vector 2 sin(theta/2) * axis.
fn rodrigues(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    2.0 * q.into_inner().imag()
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Least squares for the stacked 3N x 3 system, with the normal-equations
/// fast path and an SVD fallback when ill-conditioned.
fn solve_stacked(rows: &[(Matrix3<f64>, Vector3<f64>)]) -> Vector3<f64> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for (a, b) in rows {
        ata += a.transpose() * a;
        atb += a.transpose() * b;
    }
    let svd3 = ata.svd(false, false);
    let smax = svd3.singular_values[0];
    let smin = svd3.singular_values[2];
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond < NORMAL_EQ_COND_LIMIT {
        if let Some(chol) = ata.cholesky() {
            return chol.solve(&atb);
        }
    }
    let n = rows.len();
    let mut big_a = DMatrix::zeros(3 * n, 3);
    let mut big_b = DVector::zeros(3 * n);
    for (i, (a, b)) in rows.iter().enumerate() {
        big_a.view_mut((3 * i, 0), (3, 3)).copy_from(a);
        big_b.rows_mut(3 * i, 3).copy_from(b);
    }
    let sol = big_a
        .svd(true, true)
        .solve(&big_b, 1e-12)
        .expect("svd solve");
    Vector3::new(sol[0], sol[1], sol[2])
}

/// Solve AX = XB by the Tsai-Lenz two-step method.
pub fn solve_hand_eye(pairs: &[MotionPair]) -> Result<CalibrationResult, HandEyeError> {
    if pairs.len() < 2 {
        return Err(HandEyeError::InsufficientPairs(pairs.len()));
    }
    // Require at least one pair of non-parallel rotation axes (> 1 degree).
    let axes: Vec<Vector3<f64>> = pairs
        .iter()
        .filter_map(|p| p.a.rotation().axis().map(|a| a.into_inner()))
        .collect();
    let one_deg = 1.0_f64.to_radians();
    let well_posed = axes.iter().enumerate().any(|(i, u)| {
        axes.iter()
            .skip(i + 1)
            .any(|v| u.cross(v).norm().asin().abs() > one_deg)
    });
    if !well_posed {
        return Err(HandEyeError::DegenerateMotion);
    }

    // Rotation: skew(Pa + Pb) * x' = Pb - Pa, x' = tan(theta/2) * axis of X.
    let rot_rows: Vec<(Matrix3<f64>, Vector3<f64>)> = pairs
        .iter()
        .map(|p| {
            let pa = rodrigues(&p.a.rotation());
            let pb = rodrigues(&p.b.rotation());
            (skew(&(pa + pb)), pb - pa)
        })
        .collect();
    let x_prime = solve_stacked(&rot_rows);
    // q = (1, x') normalized gives the unit quaternion with tan(theta/2) axis x'.
    let rot_x = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_parts(1.0, x_prime));

    // Translation: (Ra - I) t = Rx * tb - ta.
    let trans_rows: Vec<(Matrix3<f64>, Vector3<f64>)> = pairs
        .iter()
        .map(|p| {
            let ra = p.a.rotation().to_rotation_matrix().into_inner();
            (
                ra - Matrix3::identity(),
                rot_x * p.b.translation() - p.a.translation(),
            )
        })
        .collect();
    let t_x = solve_stacked(&trans_rows);

    let x = RigidTransform::new(rot_x, t_x);
    let residual = calibration_residual(&x, pairs);
    Ok(CalibrationResult {
        x,
        rotation_residual: residual.rotation_error,
        translation_residual: residual.translation_error,
        pairs_used: pairs.len(),
    })
}

/// RMS discrepancy of a candidate X over the pairs: pose_error(a*X, X*b),
/// aggregated separately for rotation and translation.
pub fn calibration_residual(x: &RigidTransform, pairs: &[MotionPair]) -> PoseError {
    let mut rot_sq = 0.0;
    let mut trans_sq = 0.0;
    for p in pairs {
        let e = pose_error(&compose(&p.a, x), &compose(x, &p.b));
        rot_sq += e.rotation_error * e.rotation_error;
        trans_sq += e.translation_error * e.translation_error;
    }
    let n = pairs.len().max(1) as f64;
    PoseError {
        rotation_error: (rot_sq / n).sqrt(),
        translation_error: (trans_sq / n).sqrt(),
    }
}

/// Point-wise RMSE between the X-corrected camera trajectory and the
/// headset trajectory, in meters.
pub fn corrected_trajectory_rmse(
    x: &RigidTransform,
    camera_track: &[TimedPose],
    headset_track: &[TimedPose],
) -> Result<f64, HandEyeError> {
    if camera_track.len() != headset_track.len() || camera_track.is_empty() {
        return Err(HandEyeError::StreamMismatch(format!(
            "lengths {} vs {}",
            camera_track.len(),
            headset_track.len()
        )));
    }
    for (c, h) in camera_track.iter().zip(headset_track) {
        if (c.timestamp - h.timestamp).abs() > STREAM_ALIGN_TOL {
            return Err(HandEyeError::StreamMismatch(format!(
                "timestamps {} vs {}",
                c.timestamp, h.timestamp
            )));
        }
    }
    let sum_sq: f64 = camera_track
        .iter()
        .zip(headset_track)
        .map(|(c, h)| {
            let corrected = x.apply(&c.pose.translation());
            (corrected - h.pose.translation()).norm_squared()
        })
        .sum();
    Ok((sum_sq / camera_track.len() as f64).sqrt())
}

/// Uncorrected counterpart of [`corrected_trajectory_rmse`] (X = identity),
/// used to report the improvement the calibration buys.
pub fn raw_trajectory_rmse(
    camera_track: &[TimedPose],
    headset_track: &[TimedPose],
) -> Result<f64, HandEyeError> {
    corrected_trajectory_rmse(&RigidTransform::identity(), camera_track, headset_track)
}
