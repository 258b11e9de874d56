//! Closed-loop co-simulation of a biomechanical user model and an interactive
//! Whac-A-Mole application.
//!
//! * [`bridge`]: lockstep wire protocol and session automaton.
//! * [`armsim`]: torque-driven 3-DOF arm with activation dynamics and
//!   three-compartment fatigue.
//! * [`whacapp`]: the whack-a-mole game with its reward and RGB-D renderer, served
//!   over the bridge.
//! * [`trainer`]: PPO with GAE over parallel bridge sessions.
//! * [`tools`]: reach envelope, reward scaling, round metrics and statistics.

pub mod bridge;
pub mod rng;
pub mod armsim;
pub mod whacapp;
pub mod trainer;
pub mod tools;
