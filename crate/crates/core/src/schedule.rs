//! Progress-dependent weights for the collision and collaborative terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub t_start: u64,
    pub t_end: u64,
    pub lambda_col_min: f64,
    pub lambda_cf_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            t_start: 10_000,
            t_end: 200_000,
            lambda_col_min: 0.05,
            lambda_cf_max: 0.25,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_start >= self.t_end {
            return Err(Error::Config(format!(
                "schedule.t_start ({}) must be below schedule.t_end ({})",
                self.t_start, self.t_end
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda_col_min) {
            return Err(Error::Config("schedule.lambda_col_min must lie in [0, 1]".into()));
        }
        if !(self.lambda_cf_max >= 0.0 && self.lambda_cf_max.is_finite()) {
            return Err(Error::Config("schedule.lambda_cf_max must be >= 0".into()));
        }
        Ok(())
    }
}

/// `clip((t - t_start) / (t_end - t_start), 0, 1)`
pub fn progress(t: u64, config: &ScheduleConfig) -> Result<f64> {
    if config.t_start >= config.t_end {
        return Err(Error::Config(format!(
            "schedule.t_start ({}) must be below schedule.t_end ({})",
            config.t_start, config.t_end
        )));
    }
    let num = t as f64 - config.t_start as f64;
    let den = (config.t_end - config.t_start) as f64;
    Ok((num / den).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights {
    pub lambda_col: f64,
    pub lambda_cf: f64,
}

pub fn objective_weights(tau: f64, config: &ScheduleConfig) -> Result<ObjectiveWeights> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Numeric(format!("schedule progress {tau} outside [0, 1]")));
    }
    Ok(ObjectiveWeights {
        lambda_col: 1.0 - (1.0 - config.lambda_col_min) * tau,
        lambda_cf: config.lambda_cf_max * tau,
    })
}
