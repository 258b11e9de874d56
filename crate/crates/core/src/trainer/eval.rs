use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::EnvConfig;
use super::env::Env;
use super::policy::Policy;
use super::train::to_controls;
use super::TrainError;
use crate::armsim::ACTUATORS;
use crate::rng;
use crate::whacapp::{Difficulty, EpisodeRecord, Placement};

/// How actions are chosen during evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActionMode {
    /// Squashed policy mean.
    Deterministic,
    /// Sample from the policy distribution.
    Stochastic,
    /// Ignore the policy; controls uniform on `[0,1]` every step.
    UniformRandom,
}

/// One evaluation setting. The grid varies difficulty at the mid placement
/// and placement at medium difficulty, so medium/mid appears twice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSetting {
    pub experiment: Experiment,
    pub difficulty: Difficulty,
    pub placement: Placement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Difficulty,
    Placement,
}

pub fn evaluation_grid() -> Vec<EvalSetting> {
    let by_difficulty = Difficulty::ALL.map(|d| EvalSetting {
        experiment: Experiment::Difficulty,
        difficulty: d,
        placement: Placement::Mid,
    });
    let by_placement = Placement::ALL.map(|p| EvalSetting {
        experiment: Experiment::Placement,
        difficulty: Difficulty::Medium,
        placement: p,
    });
    by_difficulty.into_iter().chain(by_placement).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub setting: EvalSetting,
    pub round: usize,
    #[serde(flatten)]
    pub episode: EpisodeRecord,
}

/// Play `n_rounds` full rounds in one setting.
pub fn evaluate_setting(
    policy: &Policy,
    base: &EnvConfig,
    setting: EvalSetting,
    index: usize,
    n_rounds: usize,
    mode: ActionMode,
    seed: u64,
) -> Result<Vec<EvalRecord>, TrainError> {
    let mut cfg = base.clone();
    cfg.game.difficulty = setting.difficulty;
    cfg.game.placement = setting.placement;
    cfg.placements.clear();
    let mut env = Env::in_process(index, &cfg, seed)?;
    let mut rng = rng::stream(seed, "eval_action", index as u64);
    let mut out = Vec::with_capacity(n_rounds);
    while out.len() < n_rounds {
        let controls: [f64; ACTUATORS] = match mode {
            ActionMode::Deterministic => to_controls(&policy.evaluate(env.observation()).0),
            ActionMode::Stochastic => to_controls(&policy.sample(env.observation(), &mut rng).0),
            ActionMode::UniformRandom => std::array::from_fn(|_| rng.random::<f64>()),
        };
        if let Some(episode) = env.step(&controls)?.finished {
            out.push(EvalRecord {
                setting,
                round: out.len(),
                episode,
            });
        }
    }
    env.close()?;
    Ok(out)
}

/// Every setting of `grid`, in parallel, results in grid order.
pub fn evaluate_policy(
    policy: &Policy,
    base: &EnvConfig,
    grid: &[EvalSetting],
    n_rounds: usize,
    mode: ActionMode,
    seed: u64,
) -> Result<Vec<EvalRecord>, TrainError> {
    let results: Vec<Result<Vec<EvalRecord>, TrainError>> = std::thread::scope(|s| {
        let handles: Vec<_> = grid
            .iter()
            .enumerate()
            .map(|(i, setting)| s.spawn(move || evaluate_setting(policy, base, *setting, i, n_rounds, mode, seed)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(TrainError::Diverged("evaluation worker panicked".into()))))
            .collect()
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
