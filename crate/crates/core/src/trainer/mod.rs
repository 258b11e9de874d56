//! Proximal policy optimization with generalized advantage estimation,
//! driving simulated users against the game over bridge sessions.

pub mod checkpoint;
pub mod config;
pub mod env;
pub mod eval;
pub mod gae;
pub mod optim;
pub mod policy;
pub mod ppo;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{EnvConfig, ObservationMode, PpoConfig};
pub use env::{Env, StepOutcome};
pub use eval::{evaluate_policy, evaluation_grid, ActionMode, EvalRecord, EvalSetting};
pub use gae::compute_gae;
pub use optim::{lr_schedule, Adam};
pub use policy::{Policy, PolicyShape};
pub use ppo::{ppo_update, Batch, UpdateStats};
pub use train::{collect_rollouts, TrainConfig, TrainLogRecord, Trainer};

use thiserror::Error;

use crate::armsim::ArmError;
use crate::bridge::BridgeError;
use crate::whacapp::AppError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Arm(#[from] ArmError),
    #[error(transparent)]
    App(#[from] AppError),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("log: {0}")]
    Log(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
