//! Seeded scenario generators: calibration streams, marker tracking logs,
//! and partial head scenes, all with recorded ground truth.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

use super::spline::CubicSpline;
use super::{ScenarioConfig, SimError, TrajectorySpec};
use crate::fusion::{
    backproject_corner, canonical_corners, fuse_marker_poses, one_euro_step, CameraIntrinsics,
    FusedPose, MarkerObservation, MarkerRig, OneEuroState,
};
use crate::geometry::{compose, inverse, RigidTransform, TimedPose};
use crate::registration::PointCloud;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn bounded(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    if amplitude > 0.0 {
        rng.gen_range(-amplitude..amplitude)
    } else {
        0.0
    }
}

/// Synthetic camera shared by every scenario.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 600.0,
        fy: 600.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    }
}

/// Standard manikin marker layouts: 2 markers on the long axis or 4 at the
/// corners of the torso plate, all facing the camera with a slight tilt.
/// The returned rig stores marker-to-model offsets, ids starting at 1.
pub fn default_rig(marker_count: usize, marker_size: f64) -> Result<MarkerRig, SimError> {
    let placements: Vec<(f64, f64)> = match marker_count {
        2 => vec![(-0.15, 0.0), (0.15, 0.0)],
        4 => vec![(-0.15, -0.08), (0.15, -0.08), (-0.15, 0.08), (0.15, 0.08)],
        n => {
            return Err(SimError::InvalidConfig(format!(
                "no default layout for {n} markers (2 or 4 supported)"
            )))
        }
    };
    let offsets = placements
        .iter()
        .enumerate()
        .map(|(idx, &(x, y))| {
            // Marker normal (+z locally) flipped to face the camera side of
            // the model (-z), with a small per-marker tilt for variety.
            let tilt = (idx as f64 - 0.5 * (marker_count - 1) as f64) * 6f64.to_radians();
            let rotation = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI)
                * UnitQuaternion::from_axis_angle(&Vector3::y_axis(), tilt);
            let marker_in_model = RigidTransform::new(rotation, Vector3::new(x, y, -0.02));
            (idx as u32 + 1, inverse(&marker_in_model))
        })
        .collect();
    Ok(MarkerRig {
        marker_size,
        offsets,
    })
}

/// Smooth 6-DoF path: one natural cubic spline per translation axis and
/// per rotation-vector component, through seeded waypoints.
struct PosePath {
    channels: [CubicSpline; 6],
    span: f64,
}

impl PosePath {
    fn sample(rng: &mut ChaCha8Rng, spec: &TrajectorySpec) -> Self {
        let w = spec.waypoints;
        let mut values = [(); 6].map(|_| Vec::with_capacity(w));
        for _ in 0..w {
            for axis in 0..3 {
                values[axis].push(spec.center[axis] + bounded(rng, spec.translation_amplitude));
            }
            for axis in 3..6 {
                values[axis].push(bounded(rng, spec.rotation_amplitude));
            }
        }
        Self {
            channels: values.map(CubicSpline::new),
            span: (w - 1) as f64,
        }
    }

    /// Pose at normalized path position `s` in [0, 1].
    fn eval(&self, s: f64) -> RigidTransform {
        let u = s * self.span;
        let v: Vec<f64> = self.channels.iter().map(|c| c.eval(u)).collect();
        RigidTransform::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(v[3], v[4], v[5])),
            Vector3::new(v[0], v[1], v[2]),
        )
    }
}

/// Head-like template cloud: an ellipsoid (120 x 100 x 90 mm) overlaid with
/// smooth Gaussian surface features (nose, chin, ears, brow, occiput) of
/// distinct sizes and off-axis placements. The varied local curvature keeps
/// surface descriptors discriminative and removes every near-symmetry of the
/// bare ellipsoid. Units meters, centered at the origin, no normals attached.
pub fn head_template(point_count: usize) -> PointCloud {
    let semi = Vector3::new(0.06, 0.05, 0.045);
    // (direction, radial amplitude in meters, angular width in radians)
    let features: [(Vector3<f64>, f64, f64); 6] = [
        (Vector3::new(1.0, 0.0, 0.15), 0.020, 0.45),   // nose
        (Vector3::new(0.85, -0.45, -0.40), 0.012, 0.35), // chin, off-center
        (Vector3::new(0.25, 0.95, 0.05), 0.014, 0.30), // left ear
        (Vector3::new(0.15, -0.92, 0.30), 0.008, 0.40), // right ear, higher
        (Vector3::new(-0.85, 0.30, 0.45), 0.013, 0.50), // occipital bump
        (Vector3::new(0.45, 0.25, 0.86), 0.010, 0.30), // brow/crown bump
    ];
    let features: Vec<(Vector3<f64>, f64, f64)> = features
        .iter()
        .map(|(d, a, w)| (d.normalize(), *a, *w))
        .collect();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut points = Vec::with_capacity(point_count);
    for i in 0..point_count {
        // Fibonacci sphere direction.
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / point_count as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        let dir = Vector3::new(r * phi.cos(), r * phi.sin(), z);
        let mut p = dir.component_mul(&semi);
        for (axis, amplitude, width) in &features {
            let angle = dir.dot(axis).clamp(-1.0, 1.0).acos();
            let falloff = (-(angle / width).powi(2)).exp();
            p += dir * (*amplitude * falloff);
        }
        // Fine surface relief: deterministic multi-frequency modulation that
        // makes every local patch geometrically distinctive (a smooth sphere
        // gives descriptor matching nothing to hold on to).
        let relief = 0.0030 * (9.1 * dir.x + 1.0).sin() * (7.3 * dir.y - 0.5).sin()
            + 0.0025 * (8.3 * dir.y + 2.0).sin() * (10.9 * dir.z + 0.7).sin()
            + 0.0020 * (11.7 * dir.z - 1.3).sin() * (9.7 * dir.x + 2.6).sin();
        p += dir * relief;
        points.push(p);
    }
    PointCloud::from_points(points)
}

/// Calibration recording: time-aligned headset-frame and camera-frame pose
/// streams of one rigid target moved along a smooth random trajectory,
/// consistent with `x_true` up to the configured noise.
pub struct CalibrationScenario {
    pub headset_stream: Vec<TimedPose>,
    pub marker_stream: Vec<TimedPose>,
    /// Noiseless camera-frame target track (ground truth).
    pub truth_camera: Vec<TimedPose>,
    pub x_true: RigidTransform,
}

pub fn gen_calibration_scenario(
    config: &ScenarioConfig,
    x_true: &RigidTransform,
) -> Result<CalibrationScenario, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let path = PosePath::sample(&mut rng, &config.trajectory);
    let (sigma_t, sigma_r) = config.noise.controller_pose_sigma;
    let marker_sigma = config.noise.cloud_sigma;

    let mut headset_stream = Vec::with_capacity(config.frame_count);
    let mut marker_stream = Vec::with_capacity(config.frame_count);
    let mut truth_camera = Vec::with_capacity(config.frame_count);
    for i in 0..config.frame_count {
        let t = i as f64 / config.frame_rate;
        let cam = path.eval(i as f64 / (config.frame_count - 1) as f64);
        truth_camera.push(TimedPose::new(t, cam));

        let marker_noise =
            Vector3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)) * marker_sigma;
        marker_stream.push(TimedPose::new(
            t,
            RigidTransform::new(cam.rotation(), cam.translation() + marker_noise),
        ));

        let headset = compose(x_true, &cam);
        let wobble = UnitQuaternion::from_scaled_axis(
            Vector3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)) * sigma_r,
        );
        let jitter = Vector3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)) * sigma_t;
        headset_stream.push(TimedPose::new(
            t,
            RigidTransform::new(wobble * headset.rotation(), headset.translation() + jitter),
        ));
    }
    Ok(CalibrationScenario {
        headset_stream,
        marker_stream,
        truth_camera,
        x_true: *x_true,
    })
}

/// Marker tracking recording: per-frame detection sets plus the noiseless
/// camera-frame model track they were rendered from.
pub struct TrackingScenario {
    pub frames: Vec<Vec<MarkerObservation>>,
    pub truth: Vec<TimedPose>,
    pub intrinsics: CameraIntrinsics,
}

pub fn gen_tracking_scenario(
    config: &ScenarioConfig,
    rig: &MarkerRig,
) -> Result<TrackingScenario, SimError> {
    config.validate()?;
    if rig.offsets.len() != config.marker_count {
        return Err(SimError::InvalidConfig(format!(
            "rig has {} markers but config expects {}",
            rig.offsets.len(),
            config.marker_count
        )));
    }
    let k = default_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let path = PosePath::sample(&mut rng, &config.trajectory);
    let cone_cos = config.view_cone_limit_deg.to_radians().cos();
    let pixel_sigma = config.noise.corner_pixel_sigma;
    let depth_sigma = if config.use_depth {
        config.noise.depth_sigma
    } else {
        config.noise.rgb_ray_sigma
    };

    let mut frames = Vec::with_capacity(config.frame_count);
    let mut truth = Vec::with_capacity(config.frame_count);
    for i in 0..config.frame_count {
        let t = i as f64 / config.frame_rate;
        let model_cam = path.eval(i as f64 / (config.frame_count - 1) as f64);
        truth.push(TimedPose::new(t, model_cam));

        let mut detections = Vec::new();
        for (&id, offset) in &rig.offsets {
            let visible = config.marker_visibility >= 1.0
                || (config.marker_visibility > 0.0 && rng.gen_bool(config.marker_visibility));
            let marker_cam = compose(&model_cam, &inverse(offset));
            let center = marker_cam.translation();
            let normal = marker_cam.rotation() * Vector3::z();
            let to_camera = -center.normalize();
            if !visible || normal.dot(&to_camera) < cone_cos {
                continue;
            }
            let corners = canonical_corners(rig.marker_size).map(|c| marker_cam.apply(&c));
            let mut corners_2d = [Vector2::zeros(); 4];
            let mut corners_3d = [Vector3::zeros(); 4];
            let mut valid_depth = [true; 4];
            for j in 0..4 {
                let px = k.project(&corners[j])
                    + Vector2::new(gauss(&mut rng), gauss(&mut rng)) * pixel_sigma;
                let depth = corners[j].z + gauss(&mut rng) * depth_sigma;
                corners_2d[j] = px;
                match backproject_corner(&px, depth, &k) {
                    Ok(p) => corners_3d[j] = p,
                    Err(_) => valid_depth[j] = false,
                }
            }
            detections.push(MarkerObservation {
                marker_id: id,
                timestamp: t,
                corners_2d,
                corners_3d,
                valid_depth,
            });
        }
        frames.push(detections);
    }
    Ok(TrackingScenario {
        frames,
        truth,
        intrinsics: k,
    })
}

/// Camera-frame scene cloud: the template placed at `t_true`, hidden-side
/// points removed (camera-facing fraction `head_visibility` kept), per-axis
/// cloud noise applied, and optional background clutter added on a plane
/// 0.3 m behind the head (outside a nominal 300 mm region of interest).
pub fn gen_head_scene(
    config: &ScenarioConfig,
    template: &PointCloud,
    t_true: &RigidTransform,
) -> Result<PointCloud, SimError> {
    config.validate()?;
    if template.points.is_empty() {
        return Err(SimError::InvalidConfig("template cloud is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centroid = template.centroid();
    let placed: Vec<Vector3<f64>> = template.points.iter().map(|p| t_true.apply(p)).collect();

    // Visibility score: how much the local outward direction faces the
    // camera at the origin. Highest-scoring fraction survives.
    let rotation = t_true.rotation();
    let mut scored: Vec<(f64, usize)> = placed
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let outward = rotation * (template.points[i] - centroid).normalize();
            let to_camera = -p.normalize();
            (outward.dot(&to_camera), i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let keep = ((config.head_visibility * placed.len() as f64).round() as usize).min(placed.len());
    let mut kept: Vec<usize> = scored[..keep].iter().map(|&(_, i)| i).collect();
    kept.sort_unstable();

    let sigma = config.noise.cloud_sigma;
    let mut points: Vec<Vector3<f64>> = kept
        .iter()
        .map(|&i| {
            placed[i] + Vector3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)) * sigma
        })
        .collect();

    let head_center = t_true.apply(&centroid);
    for _ in 0..config.clutter_points {
        points.push(Vector3::new(
            head_center.x + rng.gen_range(-0.5..0.5),
            head_center.y + rng.gen_range(-0.5..0.5),
            head_center.z + 0.3 + rng.gen_range(-0.01..0.01),
        ));
    }
    Ok(PointCloud::from_points(points))
}

/// Output of the fuse-and-filter loop over a detection log.
pub struct TrackingOutput {
    /// Fused pose per frame before filtering; `None` where no rig marker
    /// could be fit.
    pub raw: Vec<Option<FusedPose>>,
    /// One-euro-filtered counterpart, defined on the same frames as `raw`.
    pub filtered: Vec<Option<FusedPose>>,
    /// Wall-clock processing time per frame, seconds.
    pub frame_seconds: Vec<f64>,
}

/// Run fusion plus one-euro filtering over every frame of a detection log.
pub fn run_tracking(
    frames: &[Vec<MarkerObservation>],
    rig: &MarkerRig,
    filter: &OneEuroState,
) -> Result<TrackingOutput, SimError> {
    let mut state = filter.clone();
    let mut raw = Vec::with_capacity(frames.len());
    let mut filtered = Vec::with_capacity(frames.len());
    let mut frame_seconds = Vec::with_capacity(frames.len());
    for frame in frames {
        let started = Instant::now();
        let fused = fuse_marker_poses(frame, rig).ok();
        let smoothed = match &fused {
            Some(pose) => {
                let (next, out) = one_euro_step(&state, pose)?;
                state = next;
                Some(out)
            }
            None => None,
        };
        frame_seconds.push(started.elapsed().as_secs_f64());
        raw.push(fused);
        filtered.push(smoothed);
    }
    Ok(TrackingOutput {
        raw,
        filtered,
        frame_seconds,
    })
}
