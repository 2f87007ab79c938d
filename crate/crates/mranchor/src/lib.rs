//! Spatial backbone for MR manikin training.
//!
//! The pipeline runs in four stages, all expressed over SE(3) rigid
//! transforms:
//!
//! 1. **Hand-eye calibration** ([`handeye`]) — solve the fixed
//!    headset-to-camera transform from paired controller/marker pose
//!    streams (AX = XB, Tsai-Lenz two-step).
//! 2. **Marker fusion** ([`fusion`]) — depth-backprojected fiducial
//!    corners, per-marker rigid fits, distance-weighted fusion and
//!    one-euro temporal filtering of the manikin pose.
//! 3. **ROI registration** ([`registration`]) — coarse-to-fine
//!    localization of a template cloud inside an oriented region of
//!    interest: FPFH/FGR global alignment refined by point-to-plane ICP.
//! 4. **Guidance** ([`guidance`]) — transform-chained anchoring of expert
//!    hand poses and the proximity-trigger/checkpoint state machine.
//!
//! [`sim`] provides seeded synthetic scenarios with ground truth plus the
//! APE/JFP/throughput metrics used to validate the stages; [`io`] holds
//! the JSONL/PLY formats shared with the CLI.

pub mod geometry;
pub mod guidance;
pub mod handeye;
pub mod fusion;
pub mod io;
pub mod registration;
pub mod sim;

pub use geometry::{PoseError, RigidTransform, TimedPose};
