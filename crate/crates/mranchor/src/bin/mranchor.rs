//! Command-line driver for the spatial pipeline: scenario simulation,
//! hand-eye calibration, marker tracking, head registration, guidance
//! playback, and metric reports.
//!
//! Exit codes: 0 success, 1 domain error (degenerate input, failed
//! registration, ...), 2 I/O or format error (including usage errors).

use clap::{Parser, Subcommand};
use nalgebra::Vector3;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mranchor::fusion::{FusedPose, OneEuroState};
use mranchor::geometry::{RigidTransform, TimedPose};
use mranchor::guidance::{
    guidance_step, ExpertTrajectory, GuidanceConfig, GuidanceState, Phase,
};
use mranchor::handeye::{build_motion_pairs, solve_hand_eye};
use mranchor::io::{
    group_by_timeline, read_json, read_marker_log, read_ply, read_pose_stream, write_json,
    write_marker_log, write_pose_stream, IoError,
};
use mranchor::registration::{locate_head, RegionOfInterest, RegistrationParams};
use mranchor::sim::{
    compute_metrics, default_rig, gen_calibration_scenario, gen_tracking_scenario, preset,
    run_tracking, ReportFile, PRESET_NAMES,
};

/// Timestamp slack when regrouping logs onto a frame timeline.
const TIMELINE_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "mranchor",
    version,
    about = "Spatial backbone for MR manikin training: calibration, tracking, registration, guidance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario with ground truth into a run directory.
    Simulate {
        /// Preset name: table1-{2m,4m}-{rgb,rgbd}. Optional with --calibration.
        #[arg(long, default_value = "table1-2m-rgbd")]
        scenario: String,
        /// RNG seed; the MRANCHOR_SEED environment variable overrides it.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the preset frame count.
        #[arg(long)]
        frames: Option<usize>,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Emit calibration pose streams instead of a tracking log.
        #[arg(long)]
        calibration: bool,
    },
    /// Solve the fixed headset-to-camera transform from two pose streams.
    Calibrate {
        /// Headset-frame pose stream (JSONL).
        #[arg(long)]
        headset: PathBuf,
        /// Camera-frame marker pose stream (JSONL).
        #[arg(long)]
        marker: PathBuf,
        /// Minimum per-pair rotation, degrees.
        #[arg(long, default_value_t = 5.0)]
        min_rotation_deg: f64,
        /// Write the solved transform and residuals as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fuse and filter a marker detection log into pose tracks.
    Track {
        /// Marker detection log (JSONL).
        #[arg(long)]
        obs: PathBuf,
        /// Marker rig definition (JSON).
        #[arg(long)]
        rig: PathBuf,
        /// Ground-truth pose stream providing the frame timeline (JSONL).
        #[arg(long)]
        truth: PathBuf,
        /// Directory for raw.jsonl and filtered.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Locate the template cloud inside a scene cloud (coarse + ICP).
    Register {
        /// Scene cloud (PLY).
        #[arg(long)]
        scene: PathBuf,
        /// Template cloud (PLY).
        #[arg(long)]
        template: PathBuf,
        /// ROI box center "x,y,z" in meters; scene centroid when omitted.
        #[arg(long)]
        roi_center: Option<String>,
        /// ROI half extent per axis, meters.
        #[arg(long, default_value_t = 0.15)]
        roi_half_extent: f64,
        /// Write the registration result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Step the guidance state machine over a wrist pose stream.
    Guide {
        /// Expert trajectory samples (JSONL).
        #[arg(long)]
        trajectory: PathBuf,
        /// Checkpoint table: JSON list of [sample_index, threshold_m].
        #[arg(long)]
        checkpoints: PathBuf,
        /// Wrist pose stream (JSONL).
        #[arg(long)]
        wrist: PathBuf,
        /// Write the per-step phase/event log as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a run directory against its ground truth; writes report.json.
    Metrics {
        /// Run directory produced by `simulate` (and optionally `track`).
        run: PathBuf,
        /// Include measured throughput (makes the report non-deterministic).
        #[arg(long)]
        include_throughput: bool,
    },
    /// Render report.json as a one-line text summary; writes report.txt.
    Report {
        /// Run directory containing report.json.
        run: PathBuf,
    },
}

enum CliError {
    /// Well-formed inputs that the pipeline cannot process (exit 1).
    Domain(String),
    /// Missing/unreadable/malformed files (exit 2).
    Io(String),
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Domain(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Io(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            scenario,
            seed,
            frames,
            out,
            calibration,
        } => simulate(&scenario, seed, frames, &out, calibration),
        Command::Calibrate {
            headset,
            marker,
            min_rotation_deg,
            out,
        } => calibrate(&headset, &marker, min_rotation_deg, out.as_deref()),
        Command::Track {
            obs,
            rig,
            truth,
            out,
        } => track(&obs, &rig, &truth, &out),
        Command::Register {
            scene,
            template,
            roi_center,
            roi_half_extent,
            out,
        } => register(
            &scene,
            &template,
            roi_center.as_deref(),
            roi_half_extent,
            out.as_deref(),
        ),
        Command::Guide {
            trajectory,
            checkpoints,
            wrist,
            out,
        } => guide(&trajectory, &checkpoints, &wrist, out.as_deref()),
        Command::Metrics {
            run,
            include_throughput,
        } => metrics(&run, include_throughput),
        Command::Report { run } => report(&run),
    }
}

fn effective_seed(flag: Option<u64>, config_default: u64) -> Result<u64, CliError> {
    if let Ok(raw) = std::env::var("MRANCHOR_SEED") {
        return raw
            .parse()
            .map_err(|_| CliError::Io(format!("MRANCHOR_SEED is not a valid u64: {raw:?}")));
    }
    Ok(flag.unwrap_or(config_default))
}

fn simulate(
    scenario: &str,
    seed: Option<u64>,
    frames: Option<usize>,
    out: &Path,
    calibration: bool,
) -> Result<(), CliError> {
    let mut config = preset(scenario).ok_or_else(|| {
        CliError::Domain(format!(
            "unknown scenario {scenario:?}; presets: {}",
            PRESET_NAMES.join(", ")
        ))
    })?;
    config.seed = effective_seed(seed, config.seed)?;
    if let Some(frames) = frames {
        config.frame_count = frames;
    }
    config.validate().map_err(domain)?;
    std::fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), &config)?;

    if calibration {
        // Fixed ground-truth headset-to-camera transform for closed-loop use.
        let x_true = RigidTransform::from_axis_angle(
            Vector3::new(0.2, 1.0, 0.3),
            0.6,
            Vector3::new(0.05, -0.03, 0.10),
        );
        let mut cal_config = config.clone();
        // A tracking preset's gentle sway does not constrain AX = XB well;
        // calibration recordings need large rotational excursions.
        cal_config.frame_count = frames.unwrap_or(40);
        cal_config.frame_rate = 10.0;
        cal_config.trajectory.translation_amplitude = 0.3;
        cal_config.trajectory.rotation_amplitude = 1.0;
        cal_config.trajectory.waypoints = 10;
        let scenario = gen_calibration_scenario(&cal_config, &x_true).map_err(domain)?;
        write_pose_stream(&out.join("headset.jsonl"), &scenario.headset_stream)?;
        write_pose_stream(&out.join("marker.jsonl"), &scenario.marker_stream)?;
        write_pose_stream(&out.join("truth_camera.jsonl"), &scenario.truth_camera)?;
        write_json(&out.join("x_true.json"), &scenario.x_true)?;
        println!(
            "simulated calibration recording: {} frames -> {}",
            scenario.headset_stream.len(),
            out.display()
        );
        return Ok(());
    }

    let rig = default_rig(config.marker_count, config.marker_size).map_err(domain)?;
    let tracking = gen_tracking_scenario(&config, &rig).map_err(domain)?;
    write_json(&out.join("rig.json"), &rig)?;
    write_marker_log(&out.join("observations.jsonl"), &tracking.frames)?;
    write_pose_stream(&out.join("truth.jsonl"), &tracking.truth)?;
    let detected = tracking.frames.iter().filter(|f| !f.is_empty()).count();
    println!(
        "simulated {} frames ({} with detections) -> {}",
        tracking.frames.len(),
        detected,
        out.display()
    );
    Ok(())
}

fn calibrate(
    headset: &Path,
    marker: &Path,
    min_rotation_deg: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let headset_stream = read_pose_stream(headset)?;
    let marker_stream = read_pose_stream(marker)?;
    let pairs = build_motion_pairs(
        &headset_stream,
        &marker_stream,
        min_rotation_deg.to_radians(),
    )
    .map_err(domain)?;
    let result = solve_hand_eye(&pairs).map_err(domain)?;
    if let Some(out) = out {
        write_json(out, &result)?;
    }
    let t = result.x.translation();
    let q = result.x.rotation().into_inner();
    println!(
        "calibrated from {} pairs: t=[{:.6}, {:.6}, {:.6}] m q=[{:.6}, {:.6}, {:.6}, {:.6}] \
         residuals {:.3} mm / {:.3} deg",
        result.pairs_used,
        t.x,
        t.y,
        t.z,
        q.w,
        q.i,
        q.j,
        q.k,
        result.translation_residual * 1e3,
        result.rotation_residual.to_degrees()
    );
    Ok(())
}

fn track(obs: &Path, rig: &Path, truth: &Path, out: &Path) -> Result<(), CliError> {
    let observations = read_marker_log(obs)?;
    let rig = read_json(rig)?;
    let truth = read_pose_stream(truth)?;
    let timeline: Vec<f64> = truth.iter().map(|p| p.timestamp).collect();
    let frames = group_by_timeline(observations, &timeline, TIMELINE_TOL);
    let output = run_tracking(&frames, &rig, &OneEuroState::default_params()).map_err(domain)?;
    std::fs::create_dir_all(out)?;
    write_pose_stream(&out.join("raw.jsonl"), &detected_track(&output.raw))?;
    write_pose_stream(&out.join("filtered.jsonl"), &detected_track(&output.filtered))?;
    let detected = output.raw.iter().filter(|f| f.is_some()).count();
    println!(
        "tracked {} frames ({} detected) -> {}",
        frames.len(),
        detected,
        out.display()
    );
    Ok(())
}

fn detected_track(track: &[Option<FusedPose>]) -> Vec<TimedPose> {
    track
        .iter()
        .flatten()
        .map(|f| TimedPose::new(f.timestamp, f.pose))
        .collect()
}

fn register(
    scene: &Path,
    template: &Path,
    roi_center: Option<&str>,
    roi_half_extent: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let scene_cloud = read_ply(scene)?;
    let template_cloud = read_ply(template)?;
    let center = match roi_center {
        Some(raw) => parse_vec3(raw)?,
        None => scene_cloud.centroid(),
    };
    if roi_half_extent <= 0.0 {
        return Err(CliError::Domain(format!(
            "--roi-half-extent must be positive, got {roi_half_extent}"
        )));
    }
    let roi = RegionOfInterest {
        center: RigidTransform::from_translation(center),
        half_extents: Vector3::repeat(roi_half_extent),
    };
    let result = locate_head(
        &template_cloud,
        &scene_cloud,
        &roi,
        &RegistrationParams::default(),
    )
    .map_err(domain)?;
    if let Some(out) = out {
        write_json(out, &result)?;
    }
    let t = result.transform.translation();
    println!(
        "registered: t=[{:.4}, {:.4}, {:.4}] m fitness {:.3} rmse {:.2} mm converged {}",
        t.x,
        t.y,
        t.z,
        result.fitness,
        result.inlier_rmse * 1e3,
        result.converged
    );
    Ok(())
}

fn parse_vec3(raw: &str) -> Result<Vector3<f64>, CliError> {
    let parts: Result<Vec<f64>, _> = raw.split(',').map(|p| p.trim().parse()).collect();
    match parts.as_deref() {
        Ok([x, y, z]) => Ok(Vector3::new(*x, *y, *z)),
        _ => Err(CliError::Io(format!(
            "expected \"x,y,z\" (meters), got {raw:?}"
        ))),
    }
}

fn guide(
    trajectory: &Path,
    checkpoints: &Path,
    wrist: &Path,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let samples = read_pose_stream(trajectory)?;
    let checkpoints: Vec<(usize, f64)> = read_json(checkpoints)?;
    let wrist_stream = read_pose_stream(wrist)?;
    let trajectory = ExpertTrajectory {
        samples,
        checkpoints,
    };
    if !trajectory.validate() {
        return Err(CliError::Domain(
            "invalid expert trajectory: empty samples or bad checkpoint table".into(),
        ));
    }
    let config = GuidanceConfig::default();
    let mut state = GuidanceState::new();
    let mut log = Vec::new();
    for sample in &wrist_stream {
        let expert_now = trajectory.samples[state.playback_index].pose;
        let (next, event) =
            guidance_step(&state, &trajectory, &sample.pose, &expert_now, &config)
                .map_err(domain)?;
        state = next;
        log.push(serde_json::json!({
            "t": sample.timestamp,
            "phase": state.phase,
            "event": event,
            "playback_index": state.playback_index,
        }));
        if state.phase == Phase::Completed {
            break;
        }
    }
    if let Some(out) = out {
        write_json(out, &log)?;
    }
    println!(
        "guidance processed {} wrist samples, final phase {:?}",
        log.len(),
        state.phase
    );
    Ok(())
}

fn metrics(run: &Path, include_throughput: bool) -> Result<(), CliError> {
    let truth = read_pose_stream(&run.join("truth.jsonl"))?;
    let timeline: Vec<f64> = truth.iter().map(|p| p.timestamp).collect();

    let filtered_path = run.join("filtered.jsonl");
    let (estimated, timing) = if filtered_path.exists() {
        (align_track(&read_pose_stream(&filtered_path)?, &timeline), None)
    } else {
        // No pre-tracked stream: run the tracking loop on the raw log.
        let observations = read_marker_log(&run.join("observations.jsonl"))?;
        let rig = read_json(&run.join("rig.json"))?;
        let frames = group_by_timeline(observations, &timeline, TIMELINE_TOL);
        let output =
            run_tracking(&frames, &rig, &OneEuroState::default_params()).map_err(domain)?;
        (output.filtered, Some(output.frame_seconds))
    };
    let report = compute_metrics(&estimated, &truth, timing.as_deref()).map_err(domain)?;
    let file = report.to_report_file(include_throughput);
    write_json(&run.join("report.json"), &file)?;
    println!(
        "APE {:.2} +/- {:.2} mm / {:.2} +/- {:.2} deg | loss {:.2}% | jitter {:.2}% -> {}",
        file.ape_translation_mm.mean,
        file.ape_translation_mm.std,
        file.ape_rotation_deg.mean,
        file.ape_rotation_deg.std,
        file.marker_loss_pct,
        file.pose_jitter_pct,
        run.join("report.json").display()
    );
    Ok(())
}

/// Match a detected-frames-only pose stream back onto the truth timeline.
fn align_track(estimated: &[TimedPose], timeline: &[f64]) -> Vec<Option<FusedPose>> {
    let mut cursor = 0usize;
    timeline
        .iter()
        .map(|&t| {
            while cursor < estimated.len() && estimated[cursor].timestamp < t - TIMELINE_TOL {
                cursor += 1;
            }
            if cursor < estimated.len() && (estimated[cursor].timestamp - t).abs() <= TIMELINE_TOL {
                let sample = &estimated[cursor];
                cursor += 1;
                Some(FusedPose {
                    timestamp: t,
                    pose: sample.pose,
                    contributing_markers: Vec::new(),
                    filtered: true,
                })
            } else {
                None
            }
        })
        .collect()
}

fn report(run: &Path) -> Result<(), CliError> {
    let file: ReportFile = read_json(&run.join("report.json"))?;
    let line = format!(
        "APE {:.2} +/- {:.2} mm, {:.2} +/- {:.2} deg | marker loss {:.2}% | pose jitter {:.2}% | \
         frames {} ({} evaluated){}",
        file.ape_translation_mm.mean,
        file.ape_translation_mm.std,
        file.ape_rotation_deg.mean,
        file.ape_rotation_deg.std,
        file.marker_loss_pct,
        file.pose_jitter_pct,
        file.frames_total,
        file.frames_evaluated,
        file.throughput_fps
            .map(|f| format!(" | {f:.2} fps"))
            .unwrap_or_default()
    );
    std::fs::write(run.join("report.txt"), format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}
