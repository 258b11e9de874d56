//! Command-line front end for the vrloop toolkit: configuration loading,
//! application servers and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod net;

pub use commands::{
    cmd_envelope, cmd_eval, cmd_replay, cmd_report, cmd_reward_scale, cmd_serve, cmd_train, TrainOptions,
};
pub use config::RunConfig;
