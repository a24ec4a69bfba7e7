//! TOML configuration shared by `simulate` and `run`.
//!
//! Every section is optional and falls back to the built-in defaults; see
//! `configs/default.toml` for the full list of keys.

use std::fs;
use std::path::Path;

use mrio_core::ego_velocity::EgoVelocityConfig;
use mrio_core::mapping::MappingConfig;
use mrio_core::radar::default_mounts;
use mrio_core::stage1::Stage1Config;
use mrio_core::stage2::Stage2Config;
use mrio_core::{Extrinsics, FusionMode, GateConfig, MountConfig, PipelineConfig, Rig};
use mrio_sim::ScenarioConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Acceleration source of the pose filter.
    pub mode: FusionMode,
    pub rig: Vec<MountConfig>,
    pub gate: GateConfig,
    pub ego: EgoVelocityConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub mapping: MappingConfig,
    pub sim: ScenarioConfig,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            mode: p.mode,
            rig: default_mounts().to_vec(),
            gate: p.gate,
            ego: p.ego,
            stage1: p.stage1,
            stage2: p.stage2,
            mapping: p.mapping,
            sim: ScenarioConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.pipeline().validate().map_err(|e| e.to_string())?;
        self.rig().map_err(|e| e.to_string())?;
        self.sim.validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            gate: self.gate,
            ego: self.ego,
            stage1: self.stage1,
            stage2: self.stage2,
            mapping: self.mapping,
            mode: self.mode,
        }
    }

    pub fn rig(&self) -> mrio_core::Result<Rig> {
        Rig::from_mounts(&self.rig)
    }

    pub fn extrinsics(&self) -> Vec<Extrinsics> {
        self.rig.iter().map(MountConfig::to_extrinsics).collect()
    }
}
