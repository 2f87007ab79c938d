//! End-to-end acceptance checks for the spatial backbone. Each test covers
//! one numbered criterion and prints a single pass/fail line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! Where a criterion calls for an independent oracle, the oracle here is
//! written from first principles (explicit loops, raw quaternion algebra)
//! rather than by calling back into the library.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mranchor::fusion::{
    canonical_corners, fuse_marker_poses, jitter_stats, FusedPose, MarkerObservation, MarkerRig,
    OneEuroState,
};
use mranchor::geometry::{compose, pose_error, RigidTransform, TimedPose};
use mranchor::guidance::{
    guidance_step, ExpertTrajectory, GuidanceConfig, GuidanceEvent, GuidanceState, Phase,
};
use mranchor::handeye::{
    build_motion_pairs, corrected_trajectory_rmse, raw_trajectory_rmse, solve_hand_eye,
};
use mranchor::registration::{
    locate_head_staged, RegionOfInterest, RegistrationParams,
};
use mranchor::sim::{
    compute_metrics, default_rig, gen_calibration_scenario, gen_head_scene, gen_tracking_scenario,
    head_template, preset, run_tracking, NoiseModel, ScenarioConfig, TrajectorySpec,
};

fn verdict(number: usize, name: &str, ok: bool) {
    println!(
        "criterion {number} ({name}): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {number} ({name}) failed");
}

fn zero_noise() -> NoiseModel {
    NoiseModel {
        corner_pixel_sigma: 0.0,
        depth_sigma: 0.0,
        cloud_sigma: 0.0,
        controller_pose_sigma: (0.0, 0.0),
        rgb_ray_sigma: 0.0,
    }
}

fn calibration_config(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        frame_count: 40,
        frame_rate: 10.0,
        noise: zero_noise(),
        trajectory: TrajectorySpec {
            center: [0.0, 0.0, 0.9],
            translation_amplitude: 0.3,
            rotation_amplitude: 1.0,
            waypoints: 10,
        },
        ..ScenarioConfig::default()
    }
}

fn x_fixture() -> RigidTransform {
    RigidTransform::from_axis_angle(
        Vector3::new(0.2, 1.0, 0.3),
        0.6,
        Vector3::new(0.05, -0.03, 0.10),
    )
}

// Criterion 1: on noiseless relative-motion pairs the calibration solve is
// exact to 1e-6 m / 1e-6 rad and finishes in under a second.
#[test]
fn criterion_1_hand_eye_exactness() {
    let config = calibration_config(42);
    let x_true = x_fixture();
    let scenario = gen_calibration_scenario(&config, &x_true).unwrap();

    let started = Instant::now();
    let pairs = build_motion_pairs(
        &scenario.headset_stream,
        &scenario.marker_stream,
        5f64.to_radians(),
    )
    .unwrap();
    assert!(pairs.len() >= 20, "fixture produced {} pairs", pairs.len());
    let pairs = &pairs[..20.max(pairs.len().min(20))];
    // The fixture must exercise well-spread rotation axes.
    let axes: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|p| p.a.rotation().scaled_axis().normalize())
        .collect();
    let mut max_spread = 0f64;
    for i in 0..axes.len() {
        for j in i + 1..axes.len() {
            max_spread = max_spread.max(axes[i].dot(&axes[j]).clamp(-1.0, 1.0).acos());
        }
    }
    assert!(max_spread >= 30f64.to_radians(), "axes span only {max_spread} rad");

    let result = solve_hand_eye(pairs).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    let err = pose_error(&result.x, &x_true);

    verdict(
        1,
        "hand-eye exactness",
        err.translation_error < 1e-6 && err.rotation_error < 1e-6 && elapsed < 1.0,
    );
}

// Criterion 2: with 2 mm marker-pose noise, ten seeded trials each give a
// corrected-trajectory RMSE of at most 5 mm that beats the uncorrected RMSE.
#[test]
fn criterion_2_calibration_rmse() {
    let x_true = x_fixture();
    let mut ok = true;
    for trial in 0..10u64 {
        let mut config = calibration_config(100 + trial);
        config.noise.cloud_sigma = 2e-3;
        let scenario = gen_calibration_scenario(&config, &x_true).unwrap();
        let pairs = build_motion_pairs(
            &scenario.headset_stream,
            &scenario.marker_stream,
            5f64.to_radians(),
        )
        .unwrap();
        let result = solve_hand_eye(&pairs).unwrap();
        let corrected = corrected_trajectory_rmse(
            &result.x,
            &scenario.marker_stream,
            &scenario.headset_stream,
        )
        .unwrap();
        let uncorrected =
            raw_trajectory_rmse(&scenario.marker_stream, &scenario.headset_stream).unwrap();
        if !(corrected <= 5e-3 && corrected < uncorrected) {
            eprintln!(
                "trial {trial}: corrected {:.2} mm vs uncorrected {:.2} mm",
                corrected * 1e3,
                uncorrected * 1e3
            );
            ok = false;
        }
    }
    verdict(2, "calibration RMSE under noise", ok);
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

// Criterion 3: across matched seeded scenarios the medians hold: (a) four
// markers lose far fewer frames than two, (b) depth backprojection beats the
// wide-ray RGB proxy on APE, (c) the one-euro filter removes most jitter.
#[test]
fn criterion_3_tracking_trends() {
    let trials = 20u64;
    let frames = 600;
    let mut loss_ratio = Vec::new();
    let mut ape_ratio = Vec::new();
    let mut jitter_ratio = Vec::new();

    for trial in 0..trials {
        let run = |name: &str| {
            let mut config = preset(name).unwrap();
            config.seed = 200 + trial;
            config.frame_count = frames;
            let rig = default_rig(config.marker_count, config.marker_size).unwrap();
            let scenario = gen_tracking_scenario(&config, &rig).unwrap();
            let out = run_tracking(&scenario.frames, &rig, &OneEuroState::default_params()).unwrap();
            (out, scenario.truth)
        };

        let (two, _) = run("table1-2m-rgbd");
        let (four, truth4) = run("table1-4m-rgbd");
        let (rgb, truth_rgb) = run("table1-4m-rgb");

        let loss2 = jitter_stats(&two.raw).unwrap().marker_loss_rate;
        let loss4 = jitter_stats(&four.raw).unwrap().marker_loss_rate;
        loss_ratio.push(loss4 / loss2);

        // The depth-versus-RGB comparison is about measurement quality, so
        // it reads the unfiltered tracks; the low-pass filter's lag would
        // otherwise dominate both errors equally.
        let ape_d = compute_metrics(&four.raw, &truth4, None).unwrap();
        let ape_r = compute_metrics(&rgb.raw, &truth_rgb, None).unwrap();
        ape_ratio.push(ape_d.ape_translation_mm.mean / ape_r.ape_translation_mm.mean);

        let raw_jitter = jitter_stats(&rgb.raw).unwrap().pose_jitter_rate;
        let filtered_jitter = jitter_stats(&rgb.filtered).unwrap().pose_jitter_rate;
        jitter_ratio.push(filtered_jitter / raw_jitter);
    }

    let m_loss = median(&mut loss_ratio);
    let m_ape = median(&mut ape_ratio);
    let m_jitter = median(&mut jitter_ratio);
    eprintln!("median ratios: loss {m_loss:.4}, ape {m_ape:.4}, jitter {m_jitter:.4}");
    verdict(
        3,
        "tracking trends",
        m_loss < 0.5 && m_ape < 0.3 && m_jitter < 0.5,
    );
}

fn square_observation(id: u32, center: Vector3<f64>, size: f64) -> MarkerObservation {
    let corners = canonical_corners(size);
    let corners_3d = [
        corners[0] + center,
        corners[1] + center,
        corners[2] + center,
        corners[3] + center,
    ];
    MarkerObservation {
        marker_id: id,
        timestamp: 0.0,
        corners_2d: [Vector2::zeros(); 4],
        corners_3d,
        valid_depth: [true; 4],
    }
}

// Criterion 4: inverse-square-distance weighting reproduces the two-marker
// 1 m / 2 m fixture exactly (weights 0.8 / 0.2) and normalizes to one on
// random inputs.
#[test]
fn criterion_4_fusion_weights() {
    let size = 0.08;
    let mut offsets = BTreeMap::new();
    offsets.insert(1, RigidTransform::identity());
    offsets.insert(2, RigidTransform::identity());
    let rig = MarkerRig {
        marker_size: size,
        offsets,
    };
    let obs = vec![
        square_observation(1, Vector3::new(0.0, 0.0, 1.0), size),
        square_observation(2, Vector3::new(0.0, 0.0, 2.0), size),
    ];
    let fused = fuse_marker_poses(&obs, &rig).unwrap();

    // Hand computation: weights 1/1^2 and 1/2^2 normalize to 0.8 and 0.2;
    // the fused center is 0.8 * 1 m + 0.2 * 2 m along z.
    let mut ok = fused.contributing_markers == vec![(1, 0.8), (2, 0.2)];
    let expected_z = 0.8 * 1.0 + 0.2 * 2.0;
    ok &= fused.pose.translation() == Vector3::new(0.0, 0.0, expected_z);

    // Normalization property on random candidate sets.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let count = rng.gen_range(2..=5usize);
        let mut offsets = BTreeMap::new();
        let mut obs = Vec::new();
        for id in 0..count as u32 {
            offsets.insert(id, RigidTransform::identity());
            let center = Vector3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.3..4.0),
            );
            obs.push(square_observation(id, center, size));
        }
        let rig = MarkerRig {
            marker_size: size,
            offsets,
        };
        let fused = fuse_marker_poses(&obs, &rig).unwrap();
        let total: f64 = fused.contributing_markers.iter().map(|(_, w)| w).sum();
        ok &= (total - 1.0).abs() <= 1e-9;
    }
    verdict(4, "fusion weight arithmetic", ok);
}

// Criterion 5: two-stage head localization on the 60%-visibility, 1 mm-noise
// scene is within 2 mm / 2 deg in >=90% of 50 trials, refinement does not
// make things worse in >=95%, and each call stays under two seconds.
#[test]
fn criterion_5_registration() {
    let template = head_template(4000);
    let centroid = template.centroid();
    let mut hits = 0usize;
    let mut improved = 0usize;
    let mut max_elapsed = 0f64;
    let trials = 50u64;

    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + trial);
        let axis = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0f64),
        );
        let axis = if axis.norm() < 1e-6 { Vector3::z() } else { axis };
        let t_true = RigidTransform::from_axis_angle(
            axis,
            rng.gen_range(0.0..25f64.to_radians()),
            Vector3::new(
                rng.gen_range(-0.05..0.05),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(0.45..0.55),
            ),
        );
        let mut config = ScenarioConfig::default();
        config.seed = 300 + trial;
        config.head_visibility = 0.6;
        config.noise.cloud_sigma = 1e-3;
        let scene = gen_head_scene(&config, &template, &t_true).unwrap();

        // ROI center from a coarse cue: true head center plus up to 1 cm.
        let cue = t_true.apply(&centroid)
            + Vector3::new(
                rng.gen_range(-0.01..0.01),
                rng.gen_range(-0.01..0.01),
                rng.gen_range(-0.01..0.01),
            );
        let roi = RegionOfInterest {
            center: RigidTransform::from_translation(cue),
            half_extents: Vector3::new(0.15, 0.15, 0.15),
        };
        let mut params = RegistrationParams::default();
        params.seed = trial;

        let started = Instant::now();
        let (coarse, refined) = match locate_head_staged(&template, &scene, &roi, &params) {
            Ok(pair) => pair,
            Err(e) => {
                eprintln!("trial {trial}: {e}");
                continue;
            }
        };
        max_elapsed = max_elapsed.max(started.elapsed().as_secs_f64());

        let err = pose_error(&refined.transform, &t_true);
        if err.translation_error <= 2e-3 && err.rotation_error <= 2f64.to_radians() {
            hits += 1;
        }
        // Scalar stage error: mean displacement of template points placed by
        // the estimate versus the true placement.
        let cloud_error = |estimate: &RigidTransform| {
            template
                .points
                .iter()
                .step_by(40)
                .map(|p| (estimate.apply(p) - t_true.apply(p)).norm())
                .sum::<f64>()
        };
        let (err_refined, err_coarse) = (cloud_error(&refined.transform), cloud_error(&coarse.transform));
        if err_refined <= err_coarse {
            improved += 1;
        } else {
            eprintln!("trial {trial}: refinement regressed {err_coarse:.6} -> {err_refined:.6}");
        }
    }

    eprintln!(
        "registration: {hits}/{trials} within bounds, {improved}/{trials} improved, max {max_elapsed:.2} s"
    );
    verdict(
        5,
        "two-stage head localization",
        hits * 100 >= 90 * trials as usize
            && improved * 100 >= 95 * trials as usize
            && max_elapsed < 2.0,
    );
}

// ---- criterion 6 oracle -------------------------------------------------
// A from-scratch re-statement of the playback rules, using plain integers
// so that any divergence from the production machine shows up.

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
struct OracleState {
    phase: u8, // 0 idle, 1 active, 2 paused, 3 completed
    index: usize,
    checkpoint: usize,
}

fn oracle_step(
    state: OracleState,
    samples: usize,
    checkpoints: &[(usize, f64)],
    deviation: f64,
    trigger: f64,
) -> (OracleState, u8) {
    // events: 0 none, 1 started, 2 prompt, 3 resumed, 4 completed
    let mut next = state;
    match state.phase {
        0 => {
            if deviation < trigger {
                next.phase = 1;
                return (next, 1);
            }
            (next, 0)
        }
        2 => {
            let threshold = checkpoints
                .get(state.checkpoint)
                .map(|c| c.1)
                .unwrap_or(0.03);
            if deviation <= threshold {
                next.phase = 1;
                next.checkpoint += 1;
                return (next, 3);
            }
            (next, 0)
        }
        1 => {
            if state.checkpoint < checkpoints.len()
                && checkpoints[state.checkpoint].0 == state.index
            {
                if deviation > checkpoints[state.checkpoint].1 {
                    next.phase = 2;
                    return (next, 2);
                }
                next.checkpoint += 1;
            }
            if state.index + 1 >= samples {
                next.phase = 3;
                (next, 4)
            } else {
                next.index += 1;
                (next, 0)
            }
        }
        _ => (next, 0),
    }
}

fn phase_code(phase: Phase) -> u8 {
    match phase {
        Phase::Idle => 0,
        Phase::Active => 1,
        Phase::Paused => 2,
        Phase::Completed => 3,
    }
}

fn event_code(event: GuidanceEvent) -> u8 {
    match event {
        GuidanceEvent::None => 0,
        GuidanceEvent::AnimationStarted => 1,
        GuidanceEvent::CorrectivePrompt => 2,
        GuidanceEvent::Resumed => 3,
        GuidanceEvent::Completed => 4,
    }
}

// Criterion 6: every binary wrist trace of length <= 12 drives the machine
// exactly as the oracle predicts, and the 5 cm trigger behaves strictly at
// the boundary (4.9 cm starts playback, 5.1 cm does not).
#[test]
fn criterion_6_guidance_machine() {
    let samples: Vec<TimedPose> = (0..6)
        .map(|i| {
            TimedPose::new(
                i as f64 * 0.1,
                RigidTransform::from_translation(Vector3::new(i as f64 * 0.02, 0.0, 0.0)),
            )
        })
        .collect();
    let checkpoints = vec![(2usize, 0.03f64), (4, 0.03)];
    let trajectory = ExpertTrajectory {
        samples: samples.clone(),
        checkpoints: checkpoints.clone(),
    };
    assert!(trajectory.validate());
    let config = GuidanceConfig::default();

    let mut ok = true;
    for length in 1..=12u32 {
        for trace in 0u32..(1 << length) {
            let mut state = GuidanceState::new();
            let mut oracle = OracleState {
                phase: 0,
                index: 0,
                checkpoint: 0,
            };
            for step in 0..length {
                let near = (trace >> step) & 1 == 1;
                let expert_now = trajectory.samples[state.playback_index.min(samples.len() - 1)].pose;
                // near = on the expert hand; far = 20 cm off.
                let wrist = if near {
                    expert_now
                } else {
                    RigidTransform::from_translation(
                        expert_now.translation() + Vector3::new(0.2, 0.0, 0.0),
                    )
                };
                let deviation = if near { 0.0 } else { 0.2 };
                let (next, event) =
                    guidance_step(&state, &trajectory, &wrist, &expert_now, &config).unwrap();
                let (oracle_next, oracle_event) = oracle_step(
                    oracle,
                    samples.len(),
                    &checkpoints,
                    deviation,
                    config.trigger_distance,
                );
                let matches = phase_code(next.phase) == oracle_next.phase
                    && next.playback_index == oracle_next.index
                    && next.next_checkpoint == oracle_next.checkpoint
                    && event_code(event) == oracle_event;
                if !matches {
                    eprintln!("divergence on trace {trace:#b} (len {length}) step {step}");
                    ok = false;
                }
                state = next;
                oracle = oracle_next;
            }
        }
    }

    // Strict 5 cm boundary.
    let expert_now = trajectory.samples[0].pose;
    let probe = |distance: f64| {
        let wrist = RigidTransform::from_translation(
            expert_now.translation() + Vector3::new(distance, 0.0, 0.0),
        );
        guidance_step(&GuidanceState::new(), &trajectory, &wrist, &expert_now, &config)
            .unwrap()
    };
    let (near_state, near_event) = probe(0.049);
    let (far_state, far_event) = probe(0.051);
    ok &= near_state.phase == Phase::Active && near_event == GuidanceEvent::AnimationStarted;
    ok &= far_state.phase == Phase::Idle && far_event == GuidanceEvent::None;

    verdict(6, "guidance state machine", ok);
}

// ---- criterion 7 oracle -------------------------------------------------
// Raw-component quaternion algebra, no library calls.

fn quat_relative_angle(a: &RigidTransform, b: &RigidTransform) -> f64 {
    let qa = a.rotation().into_inner();
    let qb = b.rotation().into_inner();
    // conj(qa) * qb, expanded by hand.
    let (aw, ax, ay, az) = (qa.w, -qa.i, -qa.j, -qa.k);
    let (bw, bx, by, bz) = (qb.w, qb.i, qb.j, qb.k);
    let w = aw * bw - ax * bx - ay * by - az * bz;
    let x = aw * bx + ax * bw + ay * bz - az * by;
    let y = aw * by - ax * bz + ay * bw + az * bx;
    let z = aw * bz + ax * by - ay * bx + az * bw;
    2.0 * (x * x + y * y + z * z).sqrt().atan2(w.abs())
}

struct OracleMetrics {
    t_mean: f64,
    t_std: f64,
    r_mean: f64,
    r_std: f64,
    evaluated: usize,
    loss_rate: f64,
    jitter_rate: f64,
}

fn oracle_metrics(estimated: &[Option<FusedPose>], truth: &[TimedPose]) -> OracleMetrics {
    let mut t_errors = Vec::new();
    let mut r_errors = Vec::new();
    for i in 0..estimated.len() {
        if let Some(est) = &estimated[i] {
            t_errors.push((est.pose.translation() - truth[i].pose.translation()).norm() * 1e3);
            r_errors.push(quat_relative_angle(&est.pose, &truth[i].pose).to_degrees());
        }
    }
    let stats = |values: &[f64]| {
        if values.is_empty() {
            return (0.0, 0.0);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var =
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
        (mean, var.sqrt())
    };
    let (t_mean, t_std) = stats(&t_errors);
    let (r_mean, r_std) = stats(&r_errors);

    let lost = estimated.iter().filter(|e| e.is_none()).count();
    let mut pairs = 0usize;
    let mut jittery = 0usize;
    for window in estimated.windows(2) {
        if let (Some(prev), Some(cur)) = (&window[0], &window[1]) {
            pairs += 1;
            let jump = (cur.pose.translation() - prev.pose.translation()).norm();
            let turn = quat_relative_angle(&prev.pose, &cur.pose);
            if jump > 5e-3 || turn > 5f64.to_radians() {
                jittery += 1;
            }
        }
    }
    OracleMetrics {
        t_mean,
        t_std,
        r_mean,
        r_std,
        evaluated: t_errors.len(),
        loss_rate: lost as f64 / estimated.len() as f64,
        jitter_rate: if pairs == 0 {
            0.0
        } else {
            jittery as f64 / pairs as f64
        },
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

// Criterion 7: pose-error and jitter metrics agree with the brute-force
// oracle on 100 random tracks; counts bit-exact, means within 1e-12.
#[test]
fn criterion_7_metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ok = true;
    for _ in 0..100 {
        let frames = rng.gen_range(30..120usize);
        let mut truth = Vec::with_capacity(frames);
        let mut estimated: Vec<Option<FusedPose>> = Vec::with_capacity(frames);
        for i in 0..frames {
            let t = i as f64 / 60.0;
            let axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0f64),
            );
            let axis = if axis.norm() < 1e-6 { Vector3::x() } else { axis };
            let pose = RigidTransform::from_axis_angle(
                axis,
                rng.gen_range(0.0..2.5),
                Vector3::new(
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(0.5..2.0),
                ),
            );
            truth.push(TimedPose::new(t, pose));
            if rng.gen_bool(0.15) {
                estimated.push(None);
                continue;
            }
            // Perturbation mixing calm frames with jittery ones.
            let scale = if rng.gen_bool(0.3) { 0.05 } else { 0.002 };
            let delta_axis = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0f64),
            );
            let delta_axis = if delta_axis.norm() < 1e-6 {
                Vector3::y()
            } else {
                delta_axis
            };
            let delta = RigidTransform::from_axis_angle(
                delta_axis,
                rng.gen_range(0.0..(scale * 4.0)),
                Vector3::new(
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                    rng.gen_range(-scale..scale),
                ),
            );
            estimated.push(Some(FusedPose {
                timestamp: t,
                pose: compose(&delta, &pose),
                contributing_markers: vec![(1, 1.0)],
                filtered: false,
            }));
        }

        let report = compute_metrics(&estimated, &truth, None).unwrap();
        let oracle = oracle_metrics(&estimated, &truth);

        ok &= report.frames_evaluated == oracle.evaluated;
        ok &= report.jfp.frames_total == frames;
        ok &= report.jfp.marker_loss_rate == oracle.loss_rate;
        ok &= report.jfp.pose_jitter_rate == oracle.jitter_rate;
        ok &= close(report.ape_translation_mm.mean, oracle.t_mean);
        ok &= close(report.ape_translation_mm.std, oracle.t_std);
        ok &= close(report.ape_rotation_deg.mean, oracle.r_mean);
        ok &= close(report.ape_rotation_deg.std, oracle.r_std);
        if !ok {
            eprintln!(
                "mismatch: lib {:?}/{:?} vs oracle {}/{}",
                report.ape_translation_mm, report.ape_rotation_deg, oracle.t_mean, oracle.r_mean
            );
            break;
        }
    }
    verdict(7, "metric oracle equivalence", ok);
}

// Criterion 8: the same seed yields byte-identical report files across two
// full simulate + metrics runs of the command-line tool.
#[test]
fn criterion_8_determinism() {
    let bin = env!("CARGO_BIN_EXE_mranchor");
    let root = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path| {
        let status = Command::new(bin)
            .args(["simulate", "--scenario", "table1-2m-rgbd", "--seed", "11"])
            .args(["--frames", "300", "--out"])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
        let status = Command::new(bin).arg("metrics").arg(dir).status().unwrap();
        assert!(status.success());
        std::fs::read(dir.join("report.json")).unwrap()
    };
    let a = run(&root.path().join("a"));
    let b = run(&root.path().join("b"));
    verdict(8, "seeded determinism", a == b);
}
