use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::AdamConfig;
use crate::overlap::RegulationConfig;
use crate::schedule::ScheduleConfig;
use crate::tokenizer::TokenizerConfig;

/// Progress used for every step when progress-adaptive rebalancing is off.
pub const STATIC_PROGRESS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub total_steps: u64,
    pub temperature: f64,
    pub enable_sear: bool,
    pub enable_las: bool,
    pub enable_par: bool,
    pub tokenizer: TokenizerConfig,
    pub regulation: RegulationConfig,
    pub schedule: ScheduleConfig,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 256,
            total_steps: 200_000,
            temperature: 0.07,
            enable_sear: true,
            enable_las: true,
            enable_par: true,
            tokenizer: TokenizerConfig::default(),
            regulation: RegulationConfig::default(),
            schedule: ScheduleConfig::default(),
            optimizer: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.tokenizer.validate()?;
        self.regulation.validate(self.tokenizer.layers)?;
        self.schedule.validate()?;
        self.optimizer.validate()?;
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }

    /// Static-collision comparison point: every adaptive stage disabled.
    pub fn static_baseline(&self) -> Self {
        Self {
            enable_sear: false,
            enable_las: false,
            enable_par: false,
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
