//! The simulated user: a 3-DOF arm (shoulder elevation, shoulder azimuth,
//! elbow flexion) driven by six antagonistic torque actuators with
//! first-order activation dynamics, a rigidly attached hammer, a fixed HMD,
//! and per-actuator 3CC-r fatigue.

pub mod dynamics;
pub mod fatigue;
pub mod kinematics;
pub mod model;
pub mod perception;
pub mod user;

pub use dynamics::{step_dynamics, total_energy, ArmState};
pub use fatigue::{fatigue_step, FatigueParams, FatigueState};
pub use kinematics::forward_kinematics;
pub use model::{ArmConfig, ArmModel, PoseConfig, ACTUATORS, DOF};
pub use perception::{neural_effort, observe, HeadsetConfig, HeadsetHistory};
pub use user::SimulatedUser;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArmError {
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("simulation diverged: {0}")]
    SimulationDiverged(String),
    #[error("observation error: {0}")]
    Observation(String),
}
