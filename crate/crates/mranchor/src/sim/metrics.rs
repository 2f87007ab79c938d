//! Absolute pose error (APE) and jitter/loss (JFP) metrics against ground
//! truth, plus the 2-decimal report form written by the CLI.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::fusion::{jitter_stats, FusedPose, JitterStats};
use crate::geometry::{pose_error, TimedPose};

/// Timestamp slack when aligning an estimated track to its ground truth.
const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Aggregate track metrics in report units (millimeters / degrees).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ape_translation_mm: MeanStd,
    pub ape_rotation_deg: MeanStd,
    pub jfp: JitterStats,
    /// Frames processed per second of tracking-loop time; absent when no
    /// timing was recorded (kept out of deterministic report files).
    pub throughput_fps: Option<f64>,
    /// Detected frames that entered the APE aggregation.
    pub frames_evaluated: usize,
}

/// Score an estimated track against ground truth aligned by index.
///
/// `None` frames (lost detections) are excluded from APE but counted in the
/// loss rate. `timing` is per-frame processing seconds; pass `None` to omit
/// throughput.
pub fn compute_metrics(
    estimated: &[Option<FusedPose>],
    truth: &[TimedPose],
    timing: Option<&[f64]>,
) -> Result<MetricsReport, SimError> {
    if estimated.len() != truth.len() {
        return Err(SimError::StreamMismatch(format!(
            "estimated {} frames, truth {}",
            estimated.len(),
            truth.len()
        )));
    }
    if let Some(timing) = timing {
        if timing.len() != estimated.len() {
            return Err(SimError::StreamMismatch(format!(
                "timing {} entries, track {}",
                timing.len(),
                estimated.len()
            )));
        }
    }
    let mut translation_mm = Vec::new();
    let mut rotation_deg = Vec::new();
    for (est, gt) in estimated.iter().zip(truth) {
        let Some(est) = est else { continue };
        if (est.timestamp - gt.timestamp).abs() > ALIGN_TOL {
            return Err(SimError::StreamMismatch(format!(
                "timestamps {} vs {}",
                est.timestamp, gt.timestamp
            )));
        }
        let e = pose_error(&est.pose, &gt.pose);
        translation_mm.push(e.translation_error * 1e3);
        rotation_deg.push(e.rotation_error.to_degrees());
    }
    let jfp = jitter_stats(estimated)?;
    let throughput_fps = timing.and_then(|t| {
        let total: f64 = t.iter().sum();
        (total > 0.0).then(|| estimated.len() as f64 / total)
    });
    Ok(MetricsReport {
        ape_translation_mm: mean_std(&translation_mm),
        ape_rotation_deg: mean_std(&rotation_deg),
        jfp,
        throughput_fps,
        frames_evaluated: translation_mm.len(),
    })
}

fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd { mean: 0.0, std: 0.0 };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

/// Serialized report: everything in mm / degrees / percent, rounded to two
/// decimals. Throughput is included only on request, since wall-clock time
/// would break byte-identical reports across runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportFile {
    pub ape_translation_mm: MeanStd,
    pub ape_rotation_deg: MeanStd,
    pub marker_loss_pct: f64,
    pub pose_jitter_pct: f64,
    pub frames_total: usize,
    pub frames_evaluated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub throughput_fps: Option<f64>,
}

impl PartialEq for MeanStd {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.std == other.std
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl MetricsReport {
    pub fn to_report_file(&self, include_throughput: bool) -> ReportFile {
        ReportFile {
            ape_translation_mm: MeanStd {
                mean: round2(self.ape_translation_mm.mean),
                std: round2(self.ape_translation_mm.std),
            },
            ape_rotation_deg: MeanStd {
                mean: round2(self.ape_rotation_deg.mean),
                std: round2(self.ape_rotation_deg.std),
            },
            marker_loss_pct: round2(self.jfp.marker_loss_rate * 100.0),
            pose_jitter_pct: round2(self.jfp.pose_jitter_rate * 100.0),
            frames_total: self.jfp.frames_total,
            frames_evaluated: self.frames_evaluated,
            throughput_fps: if include_throughput {
                self.throughput_fps.map(round2)
            } else {
                None
            },
        }
    }
}
