//! End-to-end scenario: truth, IMU, tunnel and radar streams from one config
//! and seed.

use mrio_core::pipeline::{Event, ImuSample};
use mrio_core::{Extrinsics, RadarScan};
use serde::{Deserialize, Serialize};

use crate::imu::{synth_imu, BiasModel, ImuNoisePreset};
use crate::profile::{generate_truth, TrajectoryProfile, TruthSample};
use crate::radar::{synth_radar, ClutterModel, RadarModel, SimScan};
use crate::world::{TunnelConfig, TunnelWorld};

/// IMU noise either by preset name or spelled out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImuNoiseSpec {
    Named(String),
    Custom(ImuNoisePreset),
}

impl Default for ImuNoiseSpec {
    fn default() -> Self {
        ImuNoiseSpec::Named("px4".into())
    }
}

impl ImuNoiseSpec {
    pub fn resolve(&self) -> Result<ImuNoisePreset, String> {
        match self {
            ImuNoiseSpec::Named(n) => ImuNoisePreset::by_name(n).ok_or_else(|| format!("unknown IMU preset '{n}'")),
            ImuNoiseSpec::Custom(p) => Ok(*p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub profile: TrajectoryProfile,
    pub bias: BiasModel,
    pub imu_noise: ImuNoiseSpec,
    pub radar: RadarModel,
    pub clutter: ClutterModel,
    pub tunnel: TunnelConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            profile: TrajectoryProfile::rounded_loop(),
            bias: BiasModel::default(),
            imu_noise: ImuNoiseSpec::default(),
            radar: RadarModel::default(),
            clutter: ClutterModel::default(),
            tunnel: TunnelConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Everything switched off: exact IMU, exact Doppler, no clutter, no
    /// offset, and a Doppler model that matches the estimator's.
    pub fn noiseless() -> Self {
        Self {
            bias: BiasModel::Constant { c: 0.0 },
            imu_noise: ImuNoiseSpec::Named("none".into()),
            radar: RadarModel {
                doppler_sigma: 0.0,
                lever_arm: false,
                ..Default::default()
            },
            clutter: ClutterModel {
                rate: 0.0,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.profile.validate()?;
        self.imu_noise.resolve()?;
        let r = &self.radar;
        if !(r.max_range > 0.0 && r.fov_azimuth_deg > 0.0 && r.fov_elevation_deg > 0.0) {
            return Err("radar range and field of view must be positive".into());
        }
        if !(0.0..=1.0).contains(&r.detection_prob) || !(r.doppler_sigma >= 0.0) {
            return Err("detection_prob must lie in [0, 1] and doppler_sigma be non-negative".into());
        }
        let c = &self.clutter;
        if !(c.rate >= 0.0 && c.radius_min >= 0.0 && c.radius_min <= c.radius_max && c.doppler_spread >= 0.0) {
            return Err("clutter rate, radii and spread must be non-negative and ordered".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub truth: Vec<TruthSample>,
    pub imu: Vec<ImuSample>,
    pub scans: Vec<SimScan>,
    pub world: TunnelWorld,
}

impl Scenario {
    /// IMU and radar interleaved by time, IMU first on ties.
    pub fn events(&self) -> Vec<Event> {
        let mut out = Vec::with_capacity(self.imu.len() + self.scans.len());
        let mut r = self.scans.iter().map(|s| &s.scan).peekable();
        for s in &self.imu {
            while let Some(scan) = r.next_if(|scan| scan.stamp.secs() < s.stamp.secs()) {
                out.push(Event::Radar(scan.clone()));
            }
            out.push(Event::Imu(*s));
        }
        out.extend(r.cloned().map(Event::Radar));
        out
    }

    pub fn radar_scans(&self) -> impl Iterator<Item = &RadarScan> {
        self.scans.iter().map(|s| &s.scan)
    }
}

/// Seeds for the IMU and radar streams are split from `seed` so changing one
/// model never perturbs the other stream.
pub fn simulate(cfg: &ScenarioConfig, rig: &[Extrinsics], seed: u64) -> Result<Scenario, String> {
    cfg.validate()?;
    let truth = generate_truth(&cfg.profile);
    let world = TunnelWorld::along_path(&truth, &cfg.tunnel)?;
    let preset = cfg.imu_noise.resolve()?;
    let imu_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let radar_seed = imu_seed ^ 0xD1B5_4A32_D192_ED03;
    let imu = synth_imu(&truth, &cfg.bias, &preset, cfg.profile.imu_rate, imu_seed);
    let scans = synth_radar(
        &truth,
        &world,
        rig,
        &cfg.radar,
        &cfg.clutter,
        cfg.profile.radar_decimation(),
        radar_seed,
    );
    Ok(Scenario {
        truth,
        imu,
        scans,
        world,
    })
}
