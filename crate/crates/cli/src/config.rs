//! Declarative run configuration.
//!
//! A run is described by one TOML file; every key is optional. The master
//! `seed` is copied into the trainer and game configs, and every random
//! stream is derived from it by hashing the stream name with the seed.
//! Environment variables `VRLOOP_OUT_DIR` and `VRLOOP_BRIDGE_ADDR` override
//! the file; command-line flags override both.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vrloop::armsim::ArmConfig;
use vrloop::tools::ScenarioKind;
use vrloop::trainer::TrainConfig;

pub const ENV_OUT_DIR: &str = "VRLOOP_OUT_DIR";
pub const ENV_BRIDGE_ADDR: &str = "VRLOOP_BRIDGE_ADDR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Arm config file; replaces `train.env.arm` when set.
    pub arm_model: Option<PathBuf>,
    pub bridge: BridgeConfig,
    /// Write a checkpoint every this many updates (0: final only).
    pub checkpoint_every: u64,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub envelope: EnvelopeOptions,
    pub reward_scale: RewardScaleOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("vrloop-out"),
            arm_model: None,
            bridge: BridgeConfig::default(),
            checkpoint_every: 10,
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            envelope: EnvelopeOptions::default(),
            reward_scale: RewardScaleOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BridgeKind {
    /// In-process; frames are still encoded and decoded.
    Loopback,
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerMode {
    /// Spawn `vrloop serve` as a child process.
    Process,
    /// Serve from a thread of this process.
    Thread,
    /// Connect to an already running server at `addr`.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeConfig {
    pub transport: BridgeKind,
    pub server: ServerMode,
    /// Listen address for spawned servers, connect address for external ones.
    pub addr: String,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            transport: BridgeKind::Loopback,
            server: ServerMode::Process,
            addr: "127.0.0.1:0".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Deterministic,
    Stochastic,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub rounds: usize,
    pub mode: EvalMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            rounds: 10,
            mode: EvalMode::Deterministic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeOptions {
    pub resolution: usize,
    /// Width of the boundary band around the shell, meters.
    pub tolerance: f64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            resolution: 100,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardScaleOptions {
    /// Scenarios to forecast; all four when empty.
    pub scenarios: Vec<ScenarioKind>,
    /// Horizon in steps; one round when absent.
    pub horizon: Option<usize>,
    /// Start position; the resting hammer tip when absent.
    pub initial: Option<[f64; 3]>,
    /// Target position; the centre of the configured placement when absent.
    pub target: Option<[f64; 3]>,
    pub effort_level: f64,
}

impl Default for RewardScaleOptions {
    fn default() -> Self {
        Self {
            scenarios: Vec::new(),
            horizon: None,
            initial: None,
            target: None,
            effort_level: 0.05,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("invalid run config")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        // Relative arm model paths are relative to the config file.
        if let (Some(arm), Some(dir)) = (&cfg.arm_model, path.parent()) {
            if arm.is_relative() {
                cfg.arm_model = Some(dir.join(arm));
            }
        }
        Ok(cfg)
    }

    /// Apply environment-variable overrides.
    pub fn with_env(mut self) -> Self {
        if let Ok(dir) = std::env::var(ENV_OUT_DIR) {
            if !dir.is_empty() {
                self.out_dir = dir.into();
            }
        }
        if let Ok(addr) = std::env::var(ENV_BRIDGE_ADDR) {
            if !addr.is_empty() {
                self.bridge.addr = addr;
            }
        }
        self
    }

    /// Resolve the arm model file and propagate the master seed, then
    /// validate everything.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(path) = &self.arm_model {
            if !path.exists() {
                bail!("arm model file {} does not exist", path.display());
            }
            self.train.env.arm = ArmConfig::load(path)?;
        }
        self.train.ppo.seed = self.seed;
        self.train.env.game.seed = self.seed;
        self.train.validate()?;
        if self.envelope.resolution < 2 {
            bail!("envelope.resolution must be at least 2");
        }
        if !(self.envelope.tolerance >= 0.0) {
            bail!("envelope.tolerance must be non-negative");
        }
        if self.eval.rounds == 0 {
            bail!("eval.rounds must be at least 1");
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn effective_config_round_trips() {
        let cfg = RunConfig::default().resolve().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sede = 3").is_err());
        assert!(RunConfig::from_toml("[bridge]\nport = 3").is_err());
    }

    #[test]
    fn seed_propagates() {
        let cfg = RunConfig::from_toml("seed = 42\n[train.ppo]\nseed = 7").unwrap().resolve().unwrap();
        assert_eq!(cfg.train.ppo.seed, 42);
        assert_eq!(cfg.train.env.game.seed, 42);
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"
            out_dir = "runs/a"
            [bridge]
            transport = "tcp"
            server = "thread"
            [train.ppo]
            n_envs = 2
            total_steps = 4000
            [train.env.game]
            difficulty = "hard"
            constrained = false
            [reward_scale]
            scenarios = ["best_case"]
        "#;
        let cfg = RunConfig::from_toml(text).unwrap().resolve().unwrap();
        assert_eq!(cfg.bridge.transport, BridgeKind::Tcp);
        assert_eq!(cfg.train.ppo.n_envs, 2);
        assert!(!cfg.train.env.game.constrained);
        assert_eq!(cfg.reward_scale.scenarios, vec![ScenarioKind::BestCase]);
    }

    #[test]
    fn missing_arm_model_is_an_error() {
        let cfg = RunConfig {
            arm_model: Some("/nonexistent/arm.toml".into()),
            ..RunConfig::default()
        };
        assert!(cfg.resolve().unwrap_err().to_string().contains("does not exist"));
    }
}
