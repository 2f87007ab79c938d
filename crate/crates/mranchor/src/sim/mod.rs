//! Synthetic scenario generation with ground truth, plus the APE/JFP
//! metrics that score a tracking run against it.
//!
//! Everything here is seeded: the same `ScenarioConfig` always produces the
//! same streams, byte for byte, which is what makes the end-to-end
//! determinism guarantees of the CLI possible.

pub mod spline;

mod metrics;
mod scenario;

pub use metrics::{compute_metrics, MeanStd, MetricsReport, ReportFile};
pub use scenario::{
    default_intrinsics, default_rig, gen_calibration_scenario, gen_head_scene,
    gen_tracking_scenario, head_template, run_tracking, CalibrationScenario, TrackingOutput,
    TrackingScenario,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::FusionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("stream mismatch: {0}")]
    StreamMismatch(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

/// Spline-based motion spec: waypoints are drawn from the scenario RNG
/// inside the amplitude bounds and interpolated C2-smoothly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// Camera-frame center of the translation excursion, meters.
    pub center: [f64; 3],
    /// Per-axis translation waypoint bound, meters.
    pub translation_amplitude: f64,
    /// Per-axis rotation-vector waypoint bound, radians.
    pub rotation_amplitude: f64,
    /// Number of spline waypoints (>= 2).
    pub waypoints: usize,
}

/// Measurement-noise magnitudes: synthetic stand-ins for the error
/// sources a real camera and controller would contribute.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Corner detection noise, pixels (both axes).
    pub corner_pixel_sigma: f64,
    /// Depth-sensor noise on corner depths, meters.
    pub depth_sigma: f64,
    /// Point-cloud per-axis noise, meters. Also used as the camera-side
    /// marker-pose translation sigma in calibration scenarios.
    pub cloud_sigma: f64,
    /// Headset/controller pose noise: (meters, radians).
    pub controller_pose_sigma: (f64, f64),
    /// Corner-depth noise substituted for `depth_sigma` in RGB-only mode,
    /// emulating ray-based (depthless) corner estimation.
    pub rgb_ray_sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub frame_count: usize,
    /// Frames per second of the synthetic streams.
    pub frame_rate: f64,
    pub noise: NoiseModel,
    /// Markers on the manikin rig: 2 or 4 in the preset layouts.
    pub marker_count: usize,
    /// Marker square side, meters.
    pub marker_size: f64,
    /// Depth-backprojected corners when true; ray-based RGB proxy when false.
    pub use_depth: bool,
    /// Per-marker per-frame visibility probability.
    pub marker_visibility: f64,
    /// Maximum angle between marker normal and the direction to the camera
    /// before the marker is considered unreadable, degrees.
    pub view_cone_limit_deg: f64,
    pub trajectory: TrajectorySpec,
    /// Fraction of template points kept (camera-facing side first) when
    /// synthesizing a head scene.
    pub head_visibility: f64,
    /// Background clutter points added outside the head region (0 = none).
    pub clutter_points: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frame_count: 1000,
            frame_rate: 60.0,
            noise: NoiseModel {
                corner_pixel_sigma: 0.2,
                depth_sigma: 1e-3,
                cloud_sigma: 1e-3,
                controller_pose_sigma: (0.0, 0.0),
                rgb_ray_sigma: 8e-3,
            },
            marker_count: 4,
            marker_size: 0.08,
            use_depth: true,
            marker_visibility: 0.85,
            view_cone_limit_deg: 80.0,
            trajectory: TrajectorySpec {
                center: [0.0, 0.0, 1.0],
                translation_amplitude: 0.08,
                rotation_amplitude: 0.25,
                waypoints: 6,
            },
            head_visibility: 0.6,
            clutter_points: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.frame_count < 2 {
            return Err(SimError::InvalidConfig(format!(
                "frame_count must be >= 2, got {}",
                self.frame_count
            )));
        }
        if !(self.frame_rate > 0.0) {
            return Err(SimError::InvalidConfig("frame_rate must be positive".into()));
        }
        for (name, p) in [
            ("marker_visibility", self.marker_visibility),
            ("head_visibility", self.head_visibility),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        let n = &self.noise;
        for (name, s) in [
            ("corner_pixel_sigma", n.corner_pixel_sigma),
            ("depth_sigma", n.depth_sigma),
            ("cloud_sigma", n.cloud_sigma),
            ("controller_pose_sigma.0", n.controller_pose_sigma.0),
            ("controller_pose_sigma.1", n.controller_pose_sigma.1),
            ("rgb_ray_sigma", n.rgb_ray_sigma),
        ] {
            if !(s >= 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "{name} must be non-negative, got {s}"
                )));
            }
        }
        if self.marker_size <= 0.0 {
            return Err(SimError::InvalidConfig("marker_size must be positive".into()));
        }
        if self.trajectory.waypoints < 2 {
            return Err(SimError::InvalidConfig(
                "trajectory needs at least 2 waypoints".into(),
            ));
        }
        Ok(())
    }
}

pub const PRESET_NAMES: [&str; 4] = [
    "table1-2m-rgb",
    "table1-2m-rgbd",
    "table1-4m-rgb",
    "table1-4m-rgbd",
];

/// Named tracking setups mirroring the four evaluated marker/sensor
/// combinations (2 or 4 markers, RGB or RGB-D corners).
pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let (marker_count, use_depth) = match name {
        "table1-2m-rgb" => (2, false),
        "table1-2m-rgbd" => (2, true),
        "table1-4m-rgb" => (4, false),
        "table1-4m-rgbd" => (4, true),
        _ => return None,
    };
    Some(ScenarioConfig {
        marker_count,
        use_depth,
        ..ScenarioConfig::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert_eq!(cfg.marker_count % 2, 0);
        }
        assert!(preset("table1-8m-rgbd").is_none());
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let mut cfg = ScenarioConfig::default();
        cfg.frame_count = 1;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.marker_visibility = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::default();
        cfg.noise.depth_sigma = -1.0;
        assert!(cfg.validate().is_err());

        ScenarioConfig::default().validate().unwrap();
    }
}
