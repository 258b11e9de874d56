//! One training environment: a simulated user driving a bridge session.

use rand::Rng;

use super::config::{EnvConfig, ObservationMode};
use super::TrainError;
use crate::armsim::perception::{pool_image, proprioception};
use crate::armsim::{HeadsetHistory, SimulatedUser, ACTUATORS};
use crate::bridge::{
    AppEndpoint, EpisodeConfig, Hello, Loopback, ObservationMsg, Session, Transport, PROTOCOL_VERSION,
};
use crate::rng::{self, RngState, StreamRng};
use crate::whacapp::app::{CellRecord, EpisodeRecord, TARGET_SLOTS};
use crate::whacapp::curriculum::CELLS;
use crate::whacapp::{Curriculum, GameConfig, WhacApp};

/// Per-slot target features: offset from the hammer tip (3), active flag, life fraction.
pub const TARGET_FEATURES: usize = 5;

pub type BoxedTransport = Box<dyn Transport>;

/// Observation length for the given environment config.
pub fn observation_dim(cfg: &EnvConfig) -> usize {
    let base = crate::armsim::perception::PROPRIOCEPTION_LEN + 1;
    match cfg.observation {
        ObservationMode::Vector => base + TARGET_SLOTS * TARGET_FEATURES,
        ObservationMode::Visual => base + cfg.headset.stacked_len(),
    }
}

/// HELLO the environment asks for.
pub fn hello_for(cfg: &EnvConfig) -> Hello {
    let h = &cfg.headset;
    let visual = cfg.observation == ObservationMode::Visual && h.enabled();
    Hello {
        version: PROTOCOL_VERSION,
        dt: cfg.dt,
        width: if visual { h.width } else { 0 },
        height: if visual { h.height } else { 0 },
        channel_mask: if visual { h.channel_mask } else { 0 },
    }
}

/// An in-process application behind a loopback transport.
pub fn loopback_transport(game: GameConfig) -> Result<BoxedTransport, TrainError> {
    let app = WhacApp::new(game)?;
    Ok(Box::new(Loopback::new(AppEndpoint::new(app))))
}

/// What one environment step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// `[S, C_c, C_d, C_e]` as reported by the application.
    pub components: [f64; 4],
    pub finished: Option<EpisodeRecord>,
}

/// Resumable position of an environment within its current episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSnapshot {
    pub episode: u64,
    pub reset_config: EpisodeConfig,
    pub controls: Vec<[f64; ACTUATORS]>,
    pub placement_rng: RngState,
}

pub struct Env {
    pub index: usize,
    cfg: EnvConfig,
    user: SimulatedUser,
    session: Session<BoxedTransport>,
    history: HeadsetHistory,
    seed: u64,
    placement_rng: StreamRng,
    episode: u64,
    reset_config: EpisodeConfig,
    controls: Vec<[f64; ACTUATORS]>,
    last: ObservationMsg,
    obs: Vec<f64>,
    record: EpisodeRecord,
    prior: Option<String>,
    auto_reset: bool,
}

impl Env {
    /// Connect over `transport` and start the first episode.
    pub fn new(index: usize, cfg: &EnvConfig, master_seed: u64, transport: BoxedTransport) -> Result<Self, TrainError> {
        cfg.validate()?;
        let seed = rng::derive_seed(master_seed, "env", index as u64);
        let session = Session::connect(transport, hello_for(cfg))?;
        let user = SimulatedUser::new(&cfg.arm, cfg.dt)?;
        let mut env = Self {
            index,
            cfg: cfg.clone(),
            user,
            session,
            history: HeadsetHistory::default(),
            seed,
            placement_rng: rng::stream(seed, "placement", 0),
            episode: 0,
            reset_config: EpisodeConfig::new(),
            controls: Vec::new(),
            last: ObservationMsg {
                image: crate::bridge::RgbdImage::empty(),
                reward: 0.0,
                is_finished: false,
                time_feature: 1.0,
                log_entries: Vec::new(),
            },
            obs: Vec::new(),
            record: blank_record(0, &cfg.game),
            prior: None,
            auto_reset: true,
        };
        let first = env.next_episode_config();
        env.begin(first)?;
        Ok(env)
    }

    /// Convenience constructor with an in-process application.
    pub fn in_process(index: usize, cfg: &EnvConfig, master_seed: u64) -> Result<Self, TrainError> {
        Self::new(index, cfg, master_seed, loopback_transport(cfg.game.clone())?)
    }

    /// Stop at the end of an episode instead of starting the next one.
    pub fn set_auto_reset(&mut self, on: bool) {
        self.auto_reset = on;
    }

    pub fn observation(&self) -> &[f64] {
        &self.obs
    }

    pub fn last_message(&self) -> &ObservationMsg {
        &self.last
    }

    pub fn user(&self) -> &SimulatedUser {
        &self.user
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn reset_config(&self) -> &EpisodeConfig {
        &self.reset_config
    }

    fn next_episode_config(&mut self) -> EpisodeConfig {
        let g = &self.cfg.game;
        let placement = if self.cfg.placements.is_empty() {
            g.placement
        } else {
            self.cfg.placements[self.placement_rng.random_range(0..self.cfg.placements.len())]
        };
        let mut c = EpisodeConfig::new()
            .with("seed", rng::derive_seed(self.seed, "episode", self.episode))
            .with("difficulty", g.difficulty)
            .with("placement", placement)
            .with("constrained", g.constrained)
            .with("curriculum", g.curriculum)
            .with("round_duration", g.round_duration);
        if g.curriculum == Curriculum::Adaptive {
            if let Some(p) = &self.prior {
                c.set("curriculum_prior", p);
            }
        }
        c
    }

    /// Start an episode with an explicit reset config.
    pub fn begin(&mut self, config: EpisodeConfig) -> Result<(), TrainError> {
        let obs = self.session.reset_handshake(&config)?;
        self.user.reset();
        self.history.clear();
        self.record = blank_record(self.episode, &self.cfg.game);
        apply_config(&mut self.record, &config);
        self.reset_config = config;
        self.controls.clear();
        self.last = obs;
        self.obs = self.build_observation()?;
        Ok(())
    }

    /// Apply `controls` for one step; on episode end the next episode starts
    /// immediately and [`Env::observation`] belongs to it.
    pub fn step(&mut self, controls: &[f64; ACTUATORS]) -> Result<StepOutcome, TrainError> {
        let update = self.user.step(controls)?;
        let msg = self.session.step_exchange(update)?;
        self.controls.push(*controls);
        let hits_before = self.record.hits;
        self.last = msg;
        self.track(hits_before);
        let components = ["r.s", "r.c_c", "r.c_d", "r.c_e"].map(|k| self.last.log(k).unwrap_or(0.0));
        let outcome_reward = self.last.reward;
        let done = self.last.is_finished;
        self.obs = self.build_observation()?;
        let mut finished = None;
        if done {
            self.finish_record();
            finished = Some(self.record.clone());
            self.prior = Some(prior_from(&self.last));
            self.episode += 1;
            if self.auto_reset {
                let next = self.next_episode_config();
                self.begin(next)?;
            }
        }
        Ok(StepOutcome {
            reward: outcome_reward,
            done,
            components,
            finished,
        })
    }

    fn track(&mut self, hits_before: u64) {
        let m = &self.last;
        let r = &mut self.record;
        r.hits = m.log("hits").unwrap_or(0.0) as u64;
        r.steps += 1;
        if r.hits > hits_before {
            let v = m.log("v_h").unwrap_or(0.0);
            r.hit_speeds.extend(std::iter::repeat_n(v, (r.hits - hits_before) as usize));
        }
        if let Some(d) = m.log("hammer_depth") {
            r.hammer_depths.push(d);
        }
        r.max_fatigue = r.max_fatigue.max(self.user.fatigue.mean_fatigued());
        r.total_reward += m.reward;
    }

    fn finish_record(&mut self) {
        let m = &self.last;
        let r = &mut self.record;
        let get = |k: &str| m.log(k).unwrap_or(0.0) as u64;
        r.score = get("score");
        r.misses = get("misses");
        r.slow_contacts = get("slow_contacts");
        r.per_cell = (0..CELLS)
            .map(|i| CellRecord {
                spawns: get(&format!("cell{i}.spawns")),
                hits: get(&format!("cell{i}.hits")),
                misses: get(&format!("cell{i}.misses")),
            })
            .collect();
    }

    fn build_observation(&mut self) -> Result<Vec<f64>, TrainError> {
        let prop = proprioception(&self.user.model, &self.user.state, &self.user.frame);
        let mut out = Vec::with_capacity(observation_dim(&self.cfg));
        out.extend_from_slice(&prop);
        match self.cfg.observation {
            ObservationMode::Vector => {
                out.push(self.last.time_feature);
                let tip = self.user.hammer_tip();
                let n = self.last.log("targets").unwrap_or(0.0) as usize;
                for i in 0..TARGET_SLOTS {
                    if i < n {
                        let g = |c: &str| self.last.log(&format!("target{i}.{c}")).unwrap_or(0.0);
                        out.extend_from_slice(&[g("x") - tip.x, g("y") - tip.y, g("z") - tip.z, 1.0, g("age")]);
                    } else {
                        out.extend_from_slice(&[0.0; TARGET_FEATURES]);
                    }
                }
            }
            ObservationMode::Visual => {
                let block = pool_image(&self.cfg.headset, &self.last.image)?;
                out.extend_from_slice(&block);
                if let Some(delay) = self.cfg.headset.stack_delay_steps {
                    let delayed = self.history.push(block, delay);
                    out.extend_from_slice(&delayed);
                }
                out.push(self.last.time_feature);
            }
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            episode: self.episode,
            reset_config: self.reset_config.clone(),
            controls: self.controls.clone(),
            placement_rng: rng::save(&self.placement_rng),
        }
    }

    /// Rebuild the snapshot's mid-episode state by replaying its controls
    /// from the recorded reset. Both simulators are deterministic, so the
    /// result is identical to the state that was saved.
    pub fn restore(&mut self, snap: &EnvSnapshot) -> Result<(), TrainError> {
        self.episode = snap.episode;
        self.prior = snap.reset_config.get("curriculum_prior").map(str::to_string);
        self.begin(snap.reset_config.clone())?;
        let auto = self.auto_reset;
        self.auto_reset = false;
        for c in &snap.controls {
            let out = self.step(c)?;
            if out.done {
                return Err(TrainError::Checkpoint("replayed controls cross an episode end".into()));
            }
        }
        self.auto_reset = auto;
        self.placement_rng = rng::restore(&snap.placement_rng);
        Ok(())
    }

    pub fn close(&mut self) -> Result<(), TrainError> {
        Ok(self.session.close()?)
    }
}

fn blank_record(episode: u64, g: &GameConfig) -> EpisodeRecord {
    EpisodeRecord {
        episode,
        seed: g.seed,
        difficulty: g.difficulty,
        placement: g.placement,
        constrained: g.constrained,
        steps: 0,
        score: 0,
        hits: 0,
        misses: 0,
        slow_contacts: 0,
        per_cell: vec![CellRecord::default(); CELLS],
        hit_speeds: Vec::new(),
        hammer_depths: Vec::new(),
        max_fatigue: 0.0,
        total_reward: 0.0,
    }
}

fn apply_config(r: &mut EpisodeRecord, c: &EpisodeConfig) {
    let mut g = GameConfig {
        seed: r.seed,
        difficulty: r.difficulty,
        placement: r.placement,
        constrained: r.constrained,
        ..GameConfig::default()
    };
    if g.apply(c).is_ok() {
        r.seed = g.seed;
        r.difficulty = g.difficulty;
        r.placement = g.placement;
        r.constrained = g.constrained;
    }
}

fn prior_from(m: &ObservationMsg) -> String {
    (0..CELLS)
        .map(|i| {
            let s = m.log(&format!("cell{i}.spawns")).unwrap_or(0.0) as u64;
            let f = m.log(&format!("cell{i}.misses")).unwrap_or(0.0) as u64;
            format!("{s}/{f}")
        })
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whacapp::Difficulty;

    fn short_cfg() -> EnvConfig {
        let mut c = EnvConfig::default();
        c.game.round_duration = 2.0;
        c.game.difficulty = Difficulty::Hard;
        c
    }

    #[test]
    fn observation_has_declared_length() {
        let cfg = short_cfg();
        let env = Env::in_process(0, &cfg, 1).unwrap();
        assert_eq!(env.observation().len(), observation_dim(&cfg));
        assert_eq!(observation_dim(&cfg), 44);
    }

    #[test]
    fn episodes_roll_over() {
        let mut env = Env::in_process(0, &short_cfg(), 1).unwrap();
        let mut done = 0;
        for _ in 0..100 {
            let o = env.step(&[0.2; ACTUATORS]).unwrap();
            if o.done {
                done += 1;
                let r = o.finished.unwrap();
                assert_eq!(r.steps, 40);
                assert_eq!(r.hammer_depths.len(), 40);
            }
        }
        assert_eq!(done, 2);
        assert_eq!(env.episode(), 2);
    }

    #[test]
    fn envs_get_distinct_schedules() {
        let cfg = short_cfg();
        let a = Env::in_process(0, &cfg, 1).unwrap();
        let b = Env::in_process(1, &cfg, 1).unwrap();
        assert_ne!(a.reset_config().get("seed"), b.reset_config().get("seed"));
    }

    #[test]
    fn snapshot_restore_reproduces_state() {
        let cfg = short_cfg();
        let mut a = Env::in_process(0, &cfg, 3).unwrap();
        let u = |k: usize| std::array::from_fn(|i| ((k * 7 + i * 3) % 10) as f64 / 10.0);
        for k in 0..57 {
            a.step(&u(k)).unwrap();
        }
        let snap = a.snapshot();
        let mut b = Env::in_process(0, &cfg, 3).unwrap();
        b.restore(&snap).unwrap();
        assert_eq!(a.observation(), b.observation());
        for k in 57..150 {
            assert_eq!(a.step(&u(k)).unwrap(), b.step(&u(k)).unwrap());
            assert_eq!(a.observation(), b.observation());
        }
    }
}
