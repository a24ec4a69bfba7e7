//! Synthetic subterranean runs: ground truth, biased IMU, a sampled tunnel and
//! multi-radar Doppler scans with near-field clutter.

pub mod imu;
pub mod profile;
pub mod radar;
pub mod scenario;
pub mod world;

pub use imu::{synth_imu, BiasModel, ImuNoisePreset, GRAVITY};
pub use profile::{generate_truth, Segment, TrajectoryProfile, TruthSample};
pub use radar::{synth_radar, ClutterModel, RadarModel, SimScan};
pub use scenario::{simulate, ImuNoiseSpec, Scenario, ScenarioConfig};
pub use world::{TunnelConfig, TunnelWorld};
