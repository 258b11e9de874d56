//! Whac-A-Mole: a 3×3 grid of targets that must be hit with a hammer held in
//! the controller, optionally above a minimum speed along a placement-specific
//! axis. Serves the bridge protocol as the application side of the loop.

pub mod app;
pub mod config;
pub mod curriculum;
pub mod game;
pub mod render;
pub mod reward;

pub use app::{EpisodeRecord, WhacApp};
pub use config::{Curriculum, Difficulty, GameConfig, Placement, PlacementFrame, RewardWeights};
pub use curriculum::CurriculumState;
pub use game::{ContactEvent, Game, Outcome, Target, TargetState};
pub use render::{render_rgbd, Camera, Scene};
pub use reward::{compute_reward, RewardBreakdown};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AppError {
    #[error("invalid game configuration: {0}")]
    Config(String),
    #[error("episode log: {0}")]
    Log(String),
}
