use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::armsim::{ArmConfig, HeadsetConfig};
use crate::whacapp::{GameConfig, Placement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub n_envs: usize,
    pub steps_per_env: usize,
    /// Minibatch size.
    pub batch_size: usize,
    pub total_steps: u64,
    pub n_epochs: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// Fraction of `total_steps` after which the learning rate starts to decay.
    pub lr_decay_start_fraction: f64,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub kl_limit: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            n_envs: 10,
            steps_per_env: 4000,
            batch_size: 1000,
            total_steps: 2_000_000,
            n_epochs: 10,
            lr_initial: 5e-5,
            lr_final: 1e-7,
            lr_decay_start_fraction: 0.2,
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            kl_limit: 1.0,
            entropy_coef: 0.0,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            init_log_std: 0.0,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn rollout_len(&self) -> usize {
        self.n_envs * self.steps_per_env
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.n_envs == 0 || self.steps_per_env == 0 {
            return fail("n_envs and steps_per_env must be positive");
        }
        if self.batch_size == 0 || self.batch_size > self.rollout_len() {
            return fail("batch_size must lie in (0, n_envs·steps_per_env]");
        }
        if !(self.lr_final <= self.lr_initial && self.lr_final >= 0.0) {
            return fail("need 0 ≤ lr_final ≤ lr_initial");
        }
        if !(self.kl_limit > 0.0) {
            return fail("kl_limit must be positive");
        }
        if !(0.0..=1.0).contains(&self.lr_decay_start_fraction) {
            return fail("lr_decay_start_fraction must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0 && (0.0..=1.0).contains(&self.gamma) && (0.0..=1.0).contains(&self.gae_lambda)) {
            return fail("clip_epsilon, gamma or gae_lambda out of range");
        }
        if self.n_epochs == 0 {
            return fail("n_epochs must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    /// Proprioception plus time and hammer-relative target features.
    Vector,
    /// Proprioception, pooled headset image and time.
    Visual,
}

/// Everything needed to build one training environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dt: f64,
    pub observation: ObservationMode,
    pub arm: ArmConfig,
    pub game: GameConfig,
    pub headset: HeadsetConfig,
    /// When non-empty, each episode draws its placement uniformly from this list.
    pub placements: Vec<Placement>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            observation: ObservationMode::Vector,
            arm: ArmConfig::default(),
            game: GameConfig::default(),
            headset: HeadsetConfig::default(),
            placements: Vec::new(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.dt > 0.0) {
            return Err(TrainError::Config("dt must be positive".into()));
        }
        self.arm.model.validate()?;
        self.game.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_valid() {
        PpoConfig::default().validate().unwrap();
        EnvConfig::default().validate().unwrap();
    }

    #[test]
    fn batch_larger_than_rollout_rejected() {
        let c = PpoConfig {
            n_envs: 1,
            steps_per_env: 10,
            batch_size: 11,
            ..PpoConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
