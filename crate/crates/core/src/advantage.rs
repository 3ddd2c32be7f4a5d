//! Group-relative advantages.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default stabiliser added to the group standard deviation.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Rewards of the `K >= 2` responses sampled for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardGroup(Vec<f64>);

impl RewardGroup {
    pub fn new(rewards: Vec<f64>) -> Result<Self> {
        if rewards.len() < 2 {
            return Err(Error::InvalidConfig(format!("reward group needs K >= 2, got {}", rewards.len())));
        }
        Ok(RewardGroup(rewards))
    }

    pub fn rewards(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Population standard deviation (divides by `K`).
    pub fn std(&self) -> f64 {
        let mu = self.mean();
        (self.0.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / self.0.len() as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    /// `(r - mu) / (sigma + eps)`.
    Grpo,
    /// `r - mu`.
    DrGrpo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageConfig {
    pub mode: AdvantageMode,
    pub epsilon: f64,
}

impl Default for AdvantageConfig {
    fn default() -> Self {
        Self { mode: AdvantageMode::DrGrpo, epsilon: DEFAULT_EPSILON }
    }
}

impl AdvantageConfig {
    pub fn grpo(epsilon: f64) -> Result<Self> {
        let cfg = Self { mode: AdvantageMode::Grpo, epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dr_grpo() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!("advantage epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.mode == AdvantageMode::Grpo && self.epsilon == 0.0 {
            return Err(Error::InvalidConfig("grpo advantages require epsilon > 0".into()));
        }
        Ok(())
    }
}

pub fn advantages(cfg: &AdvantageConfig, group: &RewardGroup) -> Vec<f64> {
    let r = group.rewards();
    // a constant group has zero advantage exactly, whatever rounding the mean suffers
    if r.iter().all(|&x| x == r[0]) {
        return vec![0.0; r.len()];
    }
    let mu = group.mean();
    let centered = group.rewards().iter().map(|r| r - mu);
    match cfg.mode {
        AdvantageMode::DrGrpo => centered.collect(),
        AdvantageMode::Grpo => {
            let denom = group.std() + cfg.epsilon;
            centered.map(|c| if c == 0.0 { 0.0 } else { c / denom }).collect()
        }
    }
}
