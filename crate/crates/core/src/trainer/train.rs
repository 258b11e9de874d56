use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::{EnvConfig, PpoConfig};
use super::env::{loopback_transport, observation_dim, BoxedTransport, Env};
use super::gae::compute_gae;
use super::optim::{lr_schedule, Adam};
use super::policy::{sigmoid, Policy, PolicyShape};
use super::ppo::{ppo_update, Batch, UpdateStats};
use super::TrainError;
use crate::armsim::ACTUATORS;
use crate::rng::{self, StreamRng};
use crate::whacapp::EpisodeRecord;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub env: EnvConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.ppo.validate()?;
        self.env.validate()
    }

    pub fn policy_shape(&self) -> PolicyShape {
        PolicyShape {
            obs_dim: observation_dim(&self.env),
            act_dim: ACTUATORS,
            hidden: self.ppo.hidden.clone(),
        }
    }
}

/// Squash a pre-activation action into controls.
pub fn to_controls(z: &[f64]) -> [f64; ACTUATORS] {
    std::array::from_fn(|i| sigmoid(z[i]))
}

/// One environment's share of a rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnvRollout {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub components: Vec<[f64; 4]>,
    pub bootstrap: f64,
    pub finished: Vec<EpisodeRecord>,
}

impl EnvRollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Run `steps` policy steps in one environment.
pub fn collect_env(policy: &Policy, env: &mut Env, rng: &mut StreamRng, steps: usize) -> Result<EnvRollout, TrainError> {
    let mut out = EnvRollout::default();
    for _ in 0..steps {
        let obs = env.observation().to_vec();
        let (z, lp, v) = policy.sample(&obs, rng);
        let step = env.step(&to_controls(&z))?;
        out.obs.push(obs);
        out.actions.push(z);
        out.log_probs.push(lp);
        out.values.push(v);
        out.rewards.push(step.reward);
        out.dones.push(step.done);
        out.components.push(step.components);
        out.finished.extend(step.finished);
    }
    out.bootstrap = policy.evaluate(env.observation()).1;
    Ok(out)
}

/// Collect from every environment concurrently; results come back in env order.
pub fn collect_rollouts(
    policy: &Policy,
    envs: &mut [Env],
    rngs: &mut [StreamRng],
    steps: usize,
) -> Result<Vec<EnvRollout>, TrainError> {
    if envs.len() == 1 {
        return Ok(vec![collect_env(policy, &mut envs[0], &mut rngs[0], steps)?]);
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = envs
            .iter_mut()
            .zip(rngs.iter_mut())
            .map(|(env, rng)| s.spawn(move || collect_env(policy, env, rng, steps)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(TrainError::Diverged("rollout worker panicked".into()))))
            .collect()
    })
}

/// Merge per-env rollouts into one optimization batch.
pub fn build_batch(rollouts: &[EnvRollout], cfg: &PpoConfig, obs_dim: usize, act_dim: usize) -> Batch {
    let n: usize = rollouts.iter().map(EnvRollout::len).sum();
    let mut obs = Vec::with_capacity(n * obs_dim);
    let mut actions = Vec::with_capacity(n * act_dim);
    let mut old_log_prob = Vec::with_capacity(n);
    let mut advantages = Vec::with_capacity(n);
    let mut returns = Vec::with_capacity(n);
    for r in rollouts {
        let (adv, ret) = compute_gae(&r.rewards, &r.values, &r.dones, r.bootstrap, cfg.gamma, cfg.gae_lambda);
        r.obs.iter().for_each(|o| obs.extend_from_slice(o));
        r.actions.iter().for_each(|a| actions.extend_from_slice(a));
        old_log_prob.extend_from_slice(&r.log_probs);
        advantages.extend(adv);
        returns.extend(ret);
    }
    Batch {
        obs: DMatrix::from_row_slice(n, obs_dim, &obs),
        actions: DMatrix::from_row_slice(n, act_dim, &actions),
        old_log_prob,
        advantages,
        returns,
    }
}

/// Reward component means per step, in `[S, C_c, C_d, C_e]` order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ComponentMeans {
    pub s: f64,
    pub c_c: f64,
    pub c_d: f64,
    pub c_e: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub update: u64,
    pub steps: u64,
    pub lr: f64,
    pub episodes: usize,
    pub mean_episode_reward: Option<f64>,
    pub mean_hits: Option<f64>,
    pub mean_step_reward: f64,
    pub reward_components: ComponentMeans,
    pub approx_kl: f64,
    pub rejected_kl: Option<f64>,
    pub epochs: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

impl TrainLogRecord {
    fn new(update: u64, steps: u64, lr: f64, rollouts: &[EnvRollout], stats: &UpdateStats) -> Self {
        let finished: Vec<&EpisodeRecord> = rollouts.iter().flat_map(|r| &r.finished).collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = xs.collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        let n: usize = rollouts.iter().map(EnvRollout::len).sum();
        let mut comp = [0.0; 4];
        let mut total = 0.0;
        for r in rollouts {
            for (c, rew) in r.components.iter().zip(&r.rewards) {
                for k in 0..4 {
                    comp[k] += c[k];
                }
                total += rew;
            }
        }
        let nf = n.max(1) as f64;
        Self {
            update,
            steps,
            lr,
            episodes: finished.len(),
            mean_episode_reward: mean(&mut finished.iter().map(|e| e.total_reward)),
            mean_hits: mean(&mut finished.iter().map(|e| e.hits as f64)),
            mean_step_reward: total / nf,
            reward_components: ComponentMeans {
                s: comp[0] / nf,
                c_c: comp[1] / nf,
                c_d: comp[2] / nf,
                c_e: comp[3] / nf,
            },
            approx_kl: stats.approx_kl,
            rejected_kl: stats.rejected_kl,
            epochs: stats.epochs,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
        }
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub policy: Policy,
    pub adam: Adam,
    envs: Vec<Env>,
    action_rngs: Vec<StreamRng>,
    update_rng: StreamRng,
    steps: u64,
    updates: u64,
}

impl Trainer {
    /// `transports[i]` connects environment `i` to its application.
    pub fn new(config: TrainConfig, transports: Vec<BoxedTransport>) -> Result<Self, TrainError> {
        config.validate()?;
        if transports.len() != config.ppo.n_envs {
            return Err(TrainError::Config(format!(
                "{} transports for {} environments",
                transports.len(),
                config.ppo.n_envs
            )));
        }
        let seed = config.ppo.seed;
        let mut init_rng = rng::stream(seed, "policy_init", 0);
        let policy = Policy::new(config.policy_shape(), config.ppo.init_log_std, &mut init_rng);
        let adam = Adam::new(policy.params.len());
        let envs = transports
            .into_iter()
            .enumerate()
            .map(|(i, t)| Env::new(i, &config.env, seed, t))
            .collect::<Result<Vec<_>, _>>()?;
        let action_rngs = (0..envs.len()).map(|i| rng::stream(seed, "action", i as u64)).collect();
        Ok(Self {
            policy,
            adam,
            envs,
            action_rngs,
            update_rng: rng::stream(seed, "minibatch", 0),
            steps: 0,
            updates: 0,
            config,
        })
    }

    /// All environments served in-process.
    pub fn in_process(config: TrainConfig) -> Result<Self, TrainError> {
        let transports = (0..config.ppo.n_envs)
            .map(|_| loopback_transport(config.env.game.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(config, transports)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.config.ppo.total_steps
    }

    /// One collect-and-optimize cycle. On a diverged update the parameters and
    /// optimizer are left as they were before it.
    pub fn update(&mut self) -> Result<TrainLogRecord, TrainError> {
        let cfg = self.config.ppo.clone();
        let rollouts = collect_rollouts(&self.policy, &mut self.envs, &mut self.action_rngs, cfg.steps_per_env)?;
        let shape = &self.policy.shape;
        let batch = build_batch(&rollouts, &cfg, shape.obs_dim, shape.act_dim);
        let lr = lr_schedule(self.steps, cfg.total_steps, &cfg);
        let saved = (self.policy.clone(), self.adam.clone());
        let stats = match ppo_update(&mut self.policy, &mut self.adam, &batch, &cfg, lr, &mut self.update_rng) {
            Ok(s) => s,
            Err(e) => {
                self.policy = saved.0;
                self.adam = saved.1;
                return Err(e);
            }
        };
        self.steps += batch.len() as u64;
        self.updates += 1;
        Ok(TrainLogRecord::new(self.updates, self.steps, lr, &rollouts, &stats))
    }

    /// Train until `total_steps`, writing one JSON line per update. `on_update`
    /// runs after each update (checkpointing, progress output).
    pub fn run<W: Write, F: FnMut(&Trainer, &TrainLogRecord) -> Result<(), TrainError>>(
        &mut self,
        log: &mut W,
        mut on_update: F,
    ) -> Result<(), TrainError> {
        while !self.is_done() {
            let rec = self.update()?;
            let line = serde_json::to_string(&rec).map_err(|e| TrainError::Log(e.to_string()))?;
            writeln!(log, "{line}")?;
            on_update(self, &rec)?;
        }
        log.flush()?;
        Ok(())
    }

    pub fn checkpoint(&self) -> Result<Checkpoint, TrainError> {
        Ok(Checkpoint {
            config: serde_json::to_string(&self.config).map_err(|e| TrainError::Checkpoint(e.to_string()))?,
            params: self.policy.params.clone(),
            adam_m: self.adam.m.clone(),
            adam_v: self.adam.v.clone(),
            adam_t: self.adam.t,
            steps: self.steps,
            updates: self.updates,
            update_rng: rng::save(&self.update_rng),
            envs: self
                .envs
                .iter()
                .zip(&self.action_rngs)
                .map(|(e, r)| (rng::save(r), e.snapshot()))
                .collect(),
        })
    }

    pub fn config_of(ckpt: &Checkpoint) -> Result<TrainConfig, TrainError> {
        serde_json::from_str(&ckpt.config).map_err(|e| TrainError::Checkpoint(format!("bad config: {e}")))
    }

    /// Continue exactly where `ckpt` left off.
    pub fn resume(ckpt: &Checkpoint, transports: Vec<BoxedTransport>) -> Result<Self, TrainError> {
        let config = Self::config_of(ckpt)?;
        let mut t = Self::new(config, transports)?;
        let n = t.policy.params.len();
        if ckpt.params.len() != n || ckpt.adam_m.len() != n || ckpt.adam_v.len() != n {
            return Err(TrainError::Checkpoint("parameter count does not match the configuration".into()));
        }
        if ckpt.envs.len() != t.envs.len() {
            return Err(TrainError::Checkpoint("environment count mismatch".into()));
        }
        t.policy.params = ckpt.params.clone();
        t.adam.m = ckpt.adam_m.clone();
        t.adam.v = ckpt.adam_v.clone();
        t.adam.t = ckpt.adam_t;
        t.steps = ckpt.steps;
        t.updates = ckpt.updates;
        t.update_rng = rng::restore(&ckpt.update_rng);
        for (i, (r, snap)) in ckpt.envs.iter().enumerate() {
            t.action_rngs[i] = rng::restore(r);
            t.envs[i].restore(snap)?;
        }
        Ok(t)
    }

    pub fn resume_in_process(ckpt: &Checkpoint) -> Result<Self, TrainError> {
        let config = Self::config_of(ckpt)?;
        let transports = (0..config.ppo.n_envs)
            .map(|_| loopback_transport(config.env.game.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::resume(ckpt, transports)
    }

    pub fn close(&mut self) -> Result<(), TrainError> {
        for e in &mut self.envs {
            e.close()?;
        }
        Ok(())
    }
}
