//! TOML application configuration.
//!
//! Every section is optional and falls back to the built-in defaults;
//! unknown keys are rejected. `TELEOP_SIM_SEED` overrides `harness.seed`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::harness::{HarnessConfig, NetworkConfig, Scenario};
use crate::nmpc::NmpcConfig;
use crate::track::TrackConfig;
use crate::vehicle::VehicleParams;

pub const SEED_ENV: &str = "TELEOP_SIM_SEED";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub track: TrackConfig,
    pub vehicle: VehicleParams,
    pub network: NetworkConfig,
    pub nmpc: NmpcConfig,
    pub harness: HarnessConfig,
}

impl AppConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            SimError::Config(m) => SimError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.network.validate()?;
        self.nmpc.validate()?;
        self.nmpc.check_against(&self.vehicle)?;
        self.harness.validate()
    }

    /// Applies a seed override given as the value of [`SEED_ENV`].
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.harness.seed = v
                .trim()
                .parse()
                .map_err(|_| SimError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    /// Reads [`SEED_ENV`] from the process environment.
    pub fn apply_env(&mut self) -> Result<()> {
        let v = std::env::var(SEED_ENV).ok();
        self.apply_seed_override(v.as_deref())
    }

    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(&self.track, self.vehicle, self.network, self.nmpc, self.harness.clone())
    }
}
