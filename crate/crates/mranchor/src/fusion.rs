//! Fiducial-marker pose fusion for the maternal manikin.
//!
//! Detections arrive as per-marker corner sets (2D pixels plus
//! depth-backprojected 3D corners). Each marker gets a rigid least-squares
//! fit against its canonical corner square, candidates are chained through
//! the fixed marker-to-model offsets and fused with inverse-squared-distance
//! weights, and the fused stream is smoothed by a one-euro filter.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::geometry::{compose, relative_motion, RigidTransform, TimedPose};

/// Consecutive-frame deviation beyond either bound counts as pose jitter.
pub const JITTER_TRANSLATION_M: f64 = 5e-3;
pub const JITTER_ROTATION_RAD: f64 = 5.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("depth must be positive and finite, got {0}")]
    InvalidDepth(f64),
    #[error("fewer than 3 corners with valid depth")]
    TooFewCorners,
    #[error("valid corners are collinear; marker pose is unconstrained")]
    DegenerateCorners,
    #[error("no observation matches a marker in the rig")]
    NoKnownMarkers,
    #[error("sample timestamp {sample} not after filter timestamp {state}")]
    NonMonotonicTimestamps { state: f64, sample: f64 },
    #[error("track has fewer than 2 frames")]
    EmptyTrack,
}

/// Pinhole camera model shared by the RGB and depth streams.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    /// Project a camera-frame point to pixel coordinates.
    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            p.x / p.z * self.fx + self.cx,
            p.y / p.z * self.fy + self.cy,
        )
    }
}

/// One fiducial detection at one timestamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub marker_id: u32,
    pub timestamp: f64,
    /// Ordered pixel corners: top-left, top-right, bottom-right, bottom-left.
    pub corners_2d: [Vector2<f64>; 4],
    /// Camera-frame 3D corners; meaningful only where `valid_depth` is set.
    pub corners_3d: [Vector3<f64>; 4],
    pub valid_depth: [bool; 4],
}

/// Fixed marker layout: square side plus the marker-to-model offsets
/// precomputed at initialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkerRig {
    pub marker_size: f64,
    pub offsets: BTreeMap<u32, RigidTransform>,
}

/// Fused camera-frame model pose for one frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusedPose {
    pub timestamp: f64,
    pub pose: RigidTransform,
    /// Marker ids with their normalized weights (sum to 1).
    pub contributing_markers: Vec<(u32, f64)>,
    pub filtered: bool,
}

/// Marker-loss and pose-jitter fractions over a track.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JitterStats {
    pub marker_loss_rate: f64,
    pub pose_jitter_rate: f64,
    pub frames_total: usize,
}

/// Pinhole backprojection of one pixel at a measured depth.
pub fn backproject_corner(
    pixel: &Vector2<f64>,
    depth: f64,
    k: &CameraIntrinsics,
) -> Result<Vector3<f64>, FusionError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(FusionError::InvalidDepth(depth));
    }
    Ok(Vector3::new(
        (pixel.x - k.cx) * depth / k.fx,
        (pixel.y - k.cy) * depth / k.fy,
        depth,
    ))
}

/// Canonical marker corners: a square of side `size` centered at the origin
/// in the marker plane (z = 0), TL/TR/BR/BL winding.
pub fn canonical_corners(size: f64) -> [Vector3<f64>; 4] {
    let h = size / 2.0;
    [
        Vector3::new(-h, h, 0.0),
        Vector3::new(h, h, 0.0),
        Vector3::new(h, -h, 0.0),
        Vector3::new(-h, -h, 0.0),
    ]
}

/// Rigid least-squares (Kabsch, no scale) fit of the canonical corner
/// square to the observed 3D corners; marker pose in the camera frame.
pub fn fit_marker_pose(
    obs: &MarkerObservation,
    marker_size: f64,
) -> Result<RigidTransform, FusionError> {
    let canonical = canonical_corners(marker_size);
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for i in 0..4 {
        if obs.valid_depth[i] {
            src.push(canonical[i]);
            dst.push(obs.corners_3d[i]);
        }
    }
    if src.len() < 3 {
        return Err(FusionError::TooFewCorners);
    }
    if collinear(&dst) {
        return Err(FusionError::DegenerateCorners);
    }
    Ok(kabsch(&src, &dst))
}

fn collinear(pts: &[Vector3<f64>]) -> bool {
    let d0 = pts[1] - pts[0];
    pts[2..]
        .iter()
        .all(|p| d0.cross(&(p - pts[0])).norm() < 1e-6 * d0.norm().max(1e-12))
}

/// Best rigid transform mapping `src` onto `dst` in the least-squares sense.
fn kabsch(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> RigidTransform {
    let n = src.len() as f64;
    let src_mean: Vector3<f64> = src.iter().sum::<Vector3<f64>>() / n;
    let dst_mean: Vector3<f64> = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - dst_mean) * (s - src_mean).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = Rotation3::from_matrix_unchecked(u * d * vt);
    let t = dst_mean - r * src_mean;
    RigidTransform::from_rotation_matrix(&r, t)
}

/// Distance-weighted fusion of per-marker model-pose candidates.
///
/// Weights are 1/d^2 with d the camera-to-marker-center distance (mean of
/// the valid 3D corners), normalized to sum to one. Translation is the
/// weighted mean; rotation the weighted chordal mean of quaternions
/// hemisphere-aligned to the highest-weight candidate.
pub fn fuse_marker_poses(
    observations: &[MarkerObservation],
    rig: &MarkerRig,
) -> Result<FusedPose, FusionError> {
    let mut candidates: Vec<(u32, f64, RigidTransform)> = Vec::new();
    let mut timestamp = f64::NAN;
    for obs in observations {
        let Some(offset) = rig.offsets.get(&obs.marker_id) else {
            continue;
        };
        let Ok(marker_in_cam) = fit_marker_pose(obs, rig.marker_size) else {
            continue; // dropped markers count as loss at the track level
        };
        let valid: Vec<Vector3<f64>> = (0..4)
            .filter(|&i| obs.valid_depth[i])
            .map(|i| obs.corners_3d[i])
            .collect();
        let center: Vector3<f64> = valid.iter().sum::<Vector3<f64>>() / valid.len() as f64;
        let d2 = center.norm_squared().max(1e-12);
        candidates.push((obs.marker_id, 1.0 / d2, compose(&marker_in_cam, offset)));
        timestamp = obs.timestamp;
    }
    if candidates.is_empty() {
        return Err(FusionError::NoKnownMarkers);
    }

    let total: f64 = candidates.iter().map(|(_, w, _)| w).sum();
    for (_, w, _) in candidates.iter_mut() {
        *w /= total;
    }
    // Hemisphere reference: the highest-weight candidate.
    let reference = candidates
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .2
        .rotation()
        .into_inner();

    let mut translation = Vector3::zeros();
    let mut quat_sum = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for (_, w, pose) in &candidates {
        translation += *w * pose.translation();
        let mut q = pose.rotation().into_inner();
        if q.dot(&reference) < 0.0 {
            q = -q;
        }
        quat_sum += q * *w;
    }
    let rotation = UnitQuaternion::from_quaternion(quat_sum);
    Ok(FusedPose {
        timestamp,
        pose: RigidTransform::new(rotation, translation),
        contributing_markers: candidates.iter().map(|(id, w, _)| (*id, *w)).collect(),
        filtered: false,
    })
}

/// One-euro filter state over the seven pose channels (3 translation plus
/// 4 quaternion components). Single-owner mutable; one consumer advances it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OneEuroState {
    pub min_cutoff: f64,
    pub beta: f64,
    pub d_cutoff: f64,
    prev: Option<OneEuroMemory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OneEuroMemory {
    value: [f64; 7],
    derivative: [f64; 7],
    timestamp: f64,
}

impl OneEuroState {
    pub fn new(min_cutoff: f64, beta: f64, d_cutoff: f64) -> Self {
        assert!(min_cutoff > 0.0 && d_cutoff > 0.0 && beta >= 0.0);
        Self {
            min_cutoff,
            beta,
            d_cutoff,
            prev: None,
        }
    }

    pub fn default_params() -> Self {
        Self::new(1.0, 0.05, 1.0)
    }
}

fn smoothing_factor(cutoff: f64, dt: f64) -> f64 {
    let tau = 1.0 / (2.0 * std::f64::consts::PI * cutoff);
    1.0 / (1.0 + tau / dt)
}

fn pose_channels(pose: &RigidTransform) -> [f64; 7] {
    let t = pose.translation();
    let q = pose.rotation().into_inner();
    [t.x, t.y, t.z, q.w, q.i, q.j, q.k]
}

/// Advance the filter by one fused sample.
pub fn one_euro_step(
    state: &OneEuroState,
    sample: &FusedPose,
) -> Result<(OneEuroState, FusedPose), FusionError> {
    let mut channels = pose_channels(&sample.pose);
    let (value, derivative) = match &state.prev {
        None => (channels, [0.0; 7]),
        Some(prev) => {
            if sample.timestamp <= prev.timestamp {
                return Err(FusionError::NonMonotonicTimestamps {
                    state: prev.timestamp,
                    sample: sample.timestamp,
                });
            }
            // Hemisphere-align the incoming quaternion to the filtered one.
            let dot: f64 = (3..7).map(|i| channels[i] * prev.value[i]).sum();
            if dot < 0.0 {
                for c in channels.iter_mut().skip(3) {
                    *c = -*c;
                }
            }
            let dt = sample.timestamp - prev.timestamp;
            let alpha_d = smoothing_factor(state.d_cutoff, dt);
            let mut value = [0.0; 7];
            let mut derivative = [0.0; 7];
            for i in 0..7 {
                let dx = (channels[i] - prev.value[i]) / dt;
                let dx_hat = alpha_d * dx + (1.0 - alpha_d) * prev.derivative[i];
                let cutoff = state.min_cutoff + state.beta * dx_hat.abs();
                let alpha = smoothing_factor(cutoff, dt);
                value[i] = alpha * channels[i] + (1.0 - alpha) * prev.value[i];
                derivative[i] = dx_hat;
            }
            (value, derivative)
        }
    };
    let next = OneEuroState {
        min_cutoff: state.min_cutoff,
        beta: state.beta,
        d_cutoff: state.d_cutoff,
        prev: Some(OneEuroMemory {
            value,
            derivative,
            timestamp: sample.timestamp,
        }),
    };
    let rotation = UnitQuaternion::from_quaternion(Quaternion::new(
        value[3], value[4], value[5], value[6],
    ));
    let filtered = FusedPose {
        timestamp: sample.timestamp,
        pose: RigidTransform::new(rotation, Vector3::new(value[0], value[1], value[2])),
        contributing_markers: sample.contributing_markers.clone(),
        filtered: true,
    };
    Ok((next, filtered))
}

/// Marker-loss and jitter fractions of a raw track (`None` = no detection).
///
/// Jitter is counted over consecutive detected-frame pairs whose relative
/// motion exceeds 5 mm translation or 5 degrees rotation, strictly.
pub fn jitter_stats(raw_track: &[Option<FusedPose>]) -> Result<JitterStats, FusionError> {
    if raw_track.len() < 2 {
        return Err(FusionError::EmptyTrack);
    }
    let frames_total = raw_track.len();
    let lost = raw_track.iter().filter(|f| f.is_none()).count();
    let mut pairs = 0usize;
    let mut jitters = 0usize;
    for w in raw_track.windows(2) {
        if let (Some(a), Some(b)) = (&w[0], &w[1]) {
            pairs += 1;
            let rel = relative_motion(
                &TimedPose::new(a.timestamp, a.pose),
                &TimedPose::new(b.timestamp, b.pose),
            )
            .map_err(|_| FusionError::NonMonotonicTimestamps {
                state: a.timestamp,
                sample: b.timestamp,
            })?;
            let dt = (b.pose.translation() - a.pose.translation()).norm();
            if dt > JITTER_TRANSLATION_M || rel.rotation_angle() > JITTER_ROTATION_RAD {
                jitters += 1;
            }
        }
    }
    Ok(JitterStats {
        marker_loss_rate: lost as f64 / frames_total as f64,
        pose_jitter_rate: if pairs == 0 {
            0.0
        } else {
            jitters as f64 / pairs as f64
        },
        frames_total,
    })
}
