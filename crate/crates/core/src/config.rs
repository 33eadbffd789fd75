//! Engine settings, loaded from a TOML file. Every key is optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::casebook::DEFAULT_SIMILARITY_THRESHOLD;
use crate::domain::ScheduleParameters;
use crate::optimizer::{FitnessWeights, GaParams};
use crate::ranking::{TierConfig, DEFAULT_VARIATION_THRESHOLD_PCT};

pub const DEFAULT_SNAPSHOT_RETENTION: usize = 50;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub schedule: ScheduleParameters,
    pub tiers: TierConfig,
    pub weights: FitnessWeights,
    pub ga: GaParams,
    pub variation_threshold_pct: f64,
    pub snapshot_retention: usize,
    pub similarity_threshold: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleParameters::default(),
            tiers: TierConfig::default(),
            weights: FitnessWeights::default(),
            ga: GaParams::default(),
            variation_threshold_pct: DEFAULT_VARIATION_THRESHOLD_PCT,
            snapshot_retention: DEFAULT_SNAPSHOT_RETENTION,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: String| ConfigError::Invalid(e);
        self.schedule.validate().map_err(|e| invalid(e.to_string()))?;
        if self.schedule.meetings_per_visiting_day > 2 {
            return Err(invalid("meetings_per_visiting_day is at most 2".into()));
        }
        self.tiers.validate().map_err(|e| invalid(e.to_string()))?;
        self.weights.validate().map_err(invalid)?;
        self.ga.validate().map_err(invalid)?;
        if !(self.variation_threshold_pct.is_finite() && self.variation_threshold_pct > 0.0) {
            return Err(invalid("variation_threshold_pct must be positive".into()));
        }
        if self.snapshot_retention == 0 {
            return Err(invalid("snapshot_retention must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(invalid("similarity_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
