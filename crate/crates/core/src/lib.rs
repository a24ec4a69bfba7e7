//! Multi-radar inertial odometry.
//!
//! A two-stage estimator for ground robots carrying several low-cost FMCW
//! radars and an IMU:
//!
//! 1. [`radar`] gates each radar's returns by sensing radius, moves them into
//!    the body frame and merges them into one cloud per epoch.
//! 2. [`ego_velocity`] solves the Doppler least-squares problem for the body
//!    velocity.
//! 3. [`stage1`] fuses that velocity with the forward accelerometer in a
//!    two-state filter that tracks the accelerometer offset, and
//!    differentiates the filtered velocity into an offset-free acceleration.
//! 4. [`stage2`] propagates a planar `[x, y, v, θ]` state with that
//!    acceleration and corrects it with radar speed and IMU heading.
//! 5. [`mapping`] accumulates the merged scans at the estimated pose.
//!
//! [`pipeline`] wires the stages into the multi-rate loop.

pub mod ego_velocity;
pub mod error;
pub mod geometry;
pub mod mapping;
pub mod pipeline;
pub mod radar;
pub mod stage1;
pub mod stage2;

pub use error::{Error, Result};
pub use geometry::{wrap_angle, Pose, Timestamp, Vec3};
pub use pipeline::{run_pipeline, Event, FusionMode, ImuSample, Pipeline, PipelineConfig, PipelineOutput, PoseRecord};
pub use radar::{Extrinsics, GateConfig, MountConfig, RadarScan, RadarTarget, Rig};
