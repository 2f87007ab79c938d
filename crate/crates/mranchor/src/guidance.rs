//! Expert-hand anchoring and the proximity-trigger/checkpoint state
//! machine driving guided playback.
//!
//! Playback is frame-stepped: one trajectory sample per [`guidance_step`]
//! call. A wall-clock adapter belongs at the interface layer; keeping the
//! core machine step-driven makes every trace deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{compose, inverse, RigidTransform, TimedPose};

/// Wrist-to-expert distance below which playback starts, meters.
pub const TRIGGER_DISTANCE_M: f64 = 0.05;

/// Default checkpoint deviation threshold, meters.
pub const DEFAULT_CHECKPOINT_THRESHOLD_M: f64 = 0.03;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("wrist or expert pose contains non-finite values")]
    FrameMismatch,
    #[error("anchor refinement requires a converged head registration")]
    NotConverged,
}

/// Preset hand pose relative to the virtual maternal model (and its
/// refinement after neonatal re-anchoring).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GuidanceAnchor {
    /// Hand pose relative to the model.
    pub g_local: RigidTransform,
    /// Preset neonatal-head pose relative to the model; fixes the
    /// hand-to-head relation that refinement preserves.
    pub head_local: RigidTransform,
    /// Present only after a successful head localization.
    pub g_refined: Option<RigidTransform>,
}

impl GuidanceAnchor {
    pub fn new(g_local: RigidTransform, head_local: RigidTransform) -> Self {
        Self {
            g_local,
            head_local,
            g_refined: None,
        }
    }

    /// The hand pose currently in effect (refined when available).
    pub fn effective(&self) -> RigidTransform {
        self.g_refined.unwrap_or(self.g_local)
    }
}

/// Expert hand trajectory in the anchor frame with embedded checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertTrajectory {
    pub samples: Vec<TimedPose>,
    /// (sample index, deviation threshold in meters), strictly increasing
    /// indices within sample range.
    pub checkpoints: Vec<(usize, f64)>,
}

impl ExpertTrajectory {
    pub fn validate(&self) -> bool {
        !self.samples.is_empty()
            && self
                .checkpoints
                .windows(2)
                .all(|w| w[0].0 < w[1].0)
            && self
                .checkpoints
                .iter()
                .all(|(i, th)| *i < self.samples.len() && *th > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Active,
    Paused,
    Completed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GuidanceEvent {
    None,
    AnimationStarted,
    CorrectivePrompt,
    Resumed,
    Completed,
}

/// Playback state; single-owner mutable, one machine per session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceState {
    pub phase: Phase,
    pub playback_index: usize,
    /// Ordinal of the next unvisited checkpoint.
    pub next_checkpoint: usize,
}

impl GuidanceState {
    pub fn new() -> Self {
        Self {
            phase: Phase::Idle,
            playback_index: 0,
            next_checkpoint: 0,
        }
    }
}

impl Default for GuidanceState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub trigger_distance: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            trigger_distance: TRIGGER_DISTANCE_M,
        }
    }
}

/// Headset-frame hand pose: the model-to-headset chain followed by the
/// model-local hand pose.
pub fn anchor_coarse(
    g: &RigidTransform,
    t_hc: &RigidTransform,
    t_cf: &RigidTransform,
    t_fm: &RigidTransform,
) -> RigidTransform {
    compose(&compose(&compose(t_hc, t_cf), t_fm), g)
}

/// Re-anchor the hand pose to an observed head pose `t_b` (camera frame),
/// holding the preset hand-to-head relation fixed.
pub fn refine_anchor(
    anchor: &GuidanceAnchor,
    t_b: &RigidTransform,
    model_pose: &RigidTransform,
    converged: bool,
) -> Result<GuidanceAnchor, GuidanceError> {
    if !converged {
        return Err(GuidanceError::NotConverged);
    }
    let head_in_model = compose(&inverse(model_pose), t_b);
    let hand_in_head = compose(&inverse(&anchor.head_local), &anchor.g_local);
    let g_refined = compose(&head_in_model, &hand_in_head);
    Ok(GuidanceAnchor {
        g_local: anchor.g_local,
        head_local: anchor.head_local,
        g_refined: Some(g_refined),
    })
}

/// Advance the state machine by one step.
///
/// Idle -> Active when the wrist comes within the trigger distance of the
/// expert hand. While Active, playback advances one sample per step; at a
/// checkpoint an over-threshold deviation pauses playback with a
/// corrective prompt, and Paused returns to Active once the deviation is
/// back within bounds. Past the final sample the phase is Completed.
pub fn guidance_step(
    state: &GuidanceState,
    trajectory: &ExpertTrajectory,
    wrist: &RigidTransform,
    expert_now: &RigidTransform,
    config: &GuidanceConfig,
) -> Result<(GuidanceState, GuidanceEvent), GuidanceError> {
    if !wrist.is_finite() || !expert_now.is_finite() {
        return Err(GuidanceError::FrameMismatch);
    }
    let deviation = (wrist.translation() - expert_now.translation()).norm();
    let mut next = *state;
    let event = match state.phase {
        Phase::Completed => GuidanceEvent::None,
        Phase::Idle => {
            if deviation < config.trigger_distance {
                next.phase = Phase::Active;
                GuidanceEvent::AnimationStarted
            } else {
                GuidanceEvent::None
            }
        }
        Phase::Paused => {
            let threshold = trajectory
                .checkpoints
                .get(state.next_checkpoint)
                .map(|(_, th)| *th)
                .unwrap_or(DEFAULT_CHECKPOINT_THRESHOLD_M);
            if deviation <= threshold {
                next.phase = Phase::Active;
                next.next_checkpoint += 1;
                GuidanceEvent::Resumed
            } else {
                GuidanceEvent::None
            }
        }
        Phase::Active => {
            // Checkpoint test at the current sample before advancing.
            if let Some(&(idx, threshold)) = trajectory.checkpoints.get(state.next_checkpoint) {
                if state.playback_index == idx {
                    if deviation > threshold {
                        next.phase = Phase::Paused;
                        return Ok((next, GuidanceEvent::CorrectivePrompt));
                    }
                    next.next_checkpoint += 1;
                }
            }
            if state.playback_index + 1 >= trajectory.samples.len() {
                next.phase = Phase::Completed;
                GuidanceEvent::Completed
            } else {
                next.playback_index += 1;
                GuidanceEvent::None
            }
        }
    };
    Ok((next, event))
}
