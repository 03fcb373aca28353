use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RlError;
use crate::detect::Category;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(alias = "REINFORCE")]
    Reinforce,
    #[serde(alias = "PPO_CLIP")]
    PpoClip,
}

/// Training hyperparameters, read from a flat `key = value` file:
///
/// ```text
/// episodes = 500
/// learning_rate = 0.05
/// beta = 1.0
/// algorithm = "ppo_clip"
/// clip_ratio = 0.2
/// category_weight.CREDIT_CARD = 2.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    /// Defaults to 0: an action never changes later states or rewards within
    /// a document, so discounted future rewards only add noise to a step's
    /// return.
    pub gamma: f64,
    /// Privacy penalty weight β.
    pub beta: f64,
    pub tau0: f64,
    pub tau_decay: f64,
    pub tau_min: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Only used by PPO-clip.
    pub clip_ratio: f64,
    pub ppo_epochs: usize,
    /// Risk weight per category; missing categories weigh 1.
    pub category_weight: BTreeMap<Category, f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            learning_rate: 0.05,
            gamma: 0.0,
            beta: 1.0,
            tau0: 1.0,
            tau_decay: 0.995,
            tau_min: 0.05,
            seed: 0,
            algorithm: Algorithm::Reinforce,
            clip_ratio: 0.2,
            ppo_epochs: 4,
            category_weight: BTreeMap::new(),
        }
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self, RlError> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| RlError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, RlError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RlError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |what: &str| Err(RlError::Config(what.to_string()));
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.learning_rate) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be nonnegative");
        }
        if !pos(self.tau0) || !pos(self.tau_min) {
            return bad("temperatures must be positive");
        }
        if !(self.tau_decay > 0.0 && self.tau_decay <= 1.0) {
            return bad("tau_decay must lie in (0, 1]");
        }
        if self.algorithm == Algorithm::PpoClip {
            if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
                return bad("clip_ratio must lie in (0, 1)");
            }
            if self.ppo_epochs == 0 {
                return bad("ppo_epochs must be positive");
            }
        }
        if self.category_weight.values().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("category weights must be nonnegative");
        }
        Ok(())
    }

    pub fn weight(&self, c: Category) -> f64 {
        self.category_weight.get(&c).copied().unwrap_or(1.0)
    }

    /// `max(τ_min, τ0 · κ^episode)`.
    pub fn temperature(&self, episode: usize) -> f64 {
        let e = i32::try_from(episode).unwrap_or(i32::MAX);
        (self.tau0 * self.tau_decay.powi(e)).max(self.tau_min)
    }
}
