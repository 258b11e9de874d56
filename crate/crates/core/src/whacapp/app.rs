use std::io::Write;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::{Curriculum, Difficulty, GameConfig, Placement};
use super::curriculum::{CurriculumState, CELLS};
use super::game::{Game, Outcome};
use super::render::{render_rgbd, Camera, Scene};
use super::reward::{compute_reward, RewardBreakdown};
use super::AppError;
use crate::armsim::user::FATIGUE_KEY;
use crate::bridge::{
    Application, BridgeError, EpisodeConfig, Hello, ObservationMsg, Pose, RgbdImage, StateUpdateMsg,
};

/// Upper bound on target slots published in the log entries.
pub const TARGET_SLOTS: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    pub spawns: u64,
    pub hits: u64,
    pub misses: u64,
}

/// One line of the per-episode JSON-lines log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub placement: Placement,
    pub constrained: bool,
    pub steps: u64,
    pub score: u64,
    pub hits: u64,
    pub misses: u64,
    pub slow_contacts: u64,
    pub per_cell: Vec<CellRecord>,
    /// Hammer speed at every hit, m/s.
    pub hit_speeds: Vec<f64>,
    /// Hammer tip depth behind the target plane after every step, m.
    pub hammer_depths: Vec<f64>,
    /// Largest user-side mean fatigued fraction seen this episode.
    pub max_fatigue: f64,
    pub total_reward: f64,
}

/// The Whac-A-Mole application served over the bridge.
pub struct WhacApp {
    base: GameConfig,
    hello: Hello,
    game: Game,
    episode: u64,
    started: bool,
    steps: u64,
    prev_tip: Option<Vector3<f64>>,
    last_hmd: Pose,
    last_reward: Option<RewardBreakdown>,
    record: EpisodeRecord,
    finalized: bool,
    records: Vec<EpisodeRecord>,
    sink: Option<Box<dyn Write + Send>>,
    renders: u64,
}

impl WhacApp {
    pub fn new(base: GameConfig) -> Result<Self, AppError> {
        base.validate()?;
        let game = Game::new(base.clone(), CurriculumState::new(base.curriculum));
        Ok(Self {
            record: empty_record(0, &base),
            base,
            hello: Hello::default(),
            game,
            episode: 0,
            started: false,
            steps: 0,
            prev_tip: None,
            last_hmd: Pose::identity(),
            last_reward: None,
            finalized: false,
            records: Vec::new(),
            sink: None,
            renders: 0,
        })
    }

    /// Also stream each finished episode as one JSON line to `sink`.
    pub fn with_log_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.sink = Some(sink);
        self
    }

    pub fn game(&self) -> &Game {
        &self.game
    }

    pub fn last_reward(&self) -> Option<&RewardBreakdown> {
        self.last_reward.as_ref()
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<EpisodeRecord> {
        std::mem::take(&mut self.records)
    }

    /// Number of images rendered so far.
    pub fn render_count(&self) -> u64 {
        self.renders
    }

    pub fn hammer_tip(&self, controller: &Pose) -> Vector3<f64> {
        controller.transform_point(&Vector3::from(self.game.config.hammer_offset))
    }

    pub fn start_episode(&mut self, cfg: &EpisodeConfig) -> Result<(), AppError> {
        let mut game_cfg = self.base.clone();
        game_cfg.apply(cfg)?;
        let curriculum = match cfg.get("curriculum_prior") {
            Some(prior) => CurriculumState::decode_prior(game_cfg.curriculum, prior)?,
            None if game_cfg.curriculum == Curriculum::Adaptive && self.started => {
                let (spawns, misses) = self.game.curriculum_counts();
                CurriculumState::with_counts(Curriculum::Adaptive, spawns, misses)
            }
            None => CurriculumState::new(game_cfg.curriculum),
        };
        if self.started {
            self.episode += 1;
        }
        self.started = true;
        self.record = empty_record(self.episode, &game_cfg);
        self.game = Game::new(game_cfg, curriculum);
        self.steps = 0;
        self.prev_tip = None;
        self.last_reward = None;
        self.finalized = false;
        Ok(())
    }

    fn render(&mut self, hmd: &Pose, tip: Option<Vector3<f64>>) -> RgbdImage {
        if !self.hello.renders() {
            return RgbdImage::empty();
        }
        self.renders += 1;
        let cfg = &self.game.config;
        let camera = Camera {
            width: self.hello.width,
            height: self.hello.height,
            vertical_fov_deg: cfg.vertical_fov_deg,
        };
        let scene = Scene {
            frame: &self.game.frame,
            area_half_extent: cfg.grid_spacing + cfg.area_margin,
            targets: self.game.active(),
            target_radius: cfg.target_radius,
            lifespan: cfg.target_lifespan,
            hammer_tip: tip,
            hammer_radius: cfg.hammer_radius,
        };
        render_rgbd(&camera, hmd, &scene)
    }

    fn log_entries(&self, tip: Option<&Vector3<f64>>) -> Vec<(String, f64)> {
        let g = &self.game;
        let mut out: Vec<(String, f64)> = vec![
            ("clock".into(), g.clock()),
            ("score".into(), g.score as f64),
            ("hits".into(), g.hits as f64),
            ("misses".into(), g.misses as f64),
            ("slow_contacts".into(), g.slow_contacts as f64),
            ("spawned".into(), g.spawned() as f64),
        ];
        if let Some(r) = &self.last_reward {
            out.extend([
                ("v_h".into(), r.v_h),
                ("r.s".into(), r.s),
                ("r.c_c".into(), r.c_c),
                ("r.c_d".into(), r.c_d),
                ("r.c_e".into(), r.c_e),
            ]);
        }
        if let Some(tip) = tip {
            out.push(("hammer_depth".into(), g.frame.depth_of(tip)));
        }
        for (i, c) in g.cells.iter().enumerate() {
            out.push((format!("cell{i}.spawns"), c.spawns as f64));
            out.push((format!("cell{i}.hits"), c.hits as f64));
            out.push((format!("cell{i}.misses"), c.misses as f64));
        }
        out.push(("targets".into(), g.active().len() as f64));
        let life = g.config.target_lifespan;
        for (i, t) in g.active().iter().take(TARGET_SLOTS).enumerate() {
            out.push((format!("target{i}.x"), t.position.x));
            out.push((format!("target{i}.y"), t.position.y));
            out.push((format!("target{i}.z"), t.position.z));
            out.push((format!("target{i}.age"), t.age / life));
        }
        out
    }

    fn finalize(&mut self) -> Result<(), AppError> {
        if self.finalized {
            return Ok(());
        }
        self.finalized = true;
        let g = &self.game;
        let r = &mut self.record;
        r.steps = self.steps;
        r.score = g.score;
        r.hits = g.hits;
        r.misses = g.misses;
        r.slow_contacts = g.slow_contacts;
        r.per_cell = g
            .cells
            .iter()
            .map(|c| CellRecord {
                spawns: c.spawns,
                hits: c.hits,
                misses: c.misses,
            })
            .collect();
        if let Some(sink) = self.sink.as_mut() {
            let line = serde_json::to_string(&*r).map_err(|e| AppError::Log(e.to_string()))?;
            writeln!(sink, "{line}").map_err(|e| AppError::Log(e.to_string()))?;
            sink.flush().map_err(|e| AppError::Log(e.to_string()))?;
        }
        self.records.push(r.clone());
        Ok(())
    }

    /// One application step for the window `[t_current, t_next)`.
    pub fn advance(&mut self, update: &StateUpdateMsg) -> Result<ObservationMsg, AppError> {
        if !self.started {
            return Err(AppError::Config("step before the first reset".into()));
        }
        let dt = update.t_next - update.t_current;
        let controller = update
            .controllers
            .first()
            .ok_or_else(|| AppError::Config("state update carries no controller".into()))?;
        let tip = self.hammer_tip(controller);
        let velocity = match self.prev_tip {
            Some(prev) => (tip - prev) / dt,
            None => Vector3::zeros(),
        };
        self.prev_tip = Some(tip);
        self.last_hmd = update.hmd;

        self.game.spawn_update(dt);
        let events = self.game.check_hit(&tip, &velocity);
        let fatigue = update.extra(FATIGUE_KEY).unwrap_or(0.0);
        let v_h = velocity.norm();
        let reward = compute_reward(&self.game.config.weights, &events, &tip, v_h, self.game.active(), fatigue);
        self.last_reward = Some(reward);
        self.steps += 1;

        if !self.finalized {
            let rec = &mut self.record;
            rec.hit_speeds
                .extend(events.iter().filter(|e| e.outcome == Outcome::Hit).map(|_| v_h));
            rec.hammer_depths.push(self.game.frame.depth_of(&tip));
            rec.max_fatigue = rec.max_fatigue.max(fatigue);
            rec.total_reward += reward.total;
        }

        let image = self.render(&update.hmd, Some(tip));
        let is_finished = self.game.is_finished();
        if is_finished {
            self.finalize()?;
        }
        Ok(ObservationMsg {
            image,
            reward: reward.total,
            is_finished,
            time_feature: self.game.time_feature(),
            log_entries: self.log_entries(Some(&tip)),
        })
    }
}

fn empty_record(episode: u64, cfg: &GameConfig) -> EpisodeRecord {
    EpisodeRecord {
        episode,
        seed: cfg.seed,
        difficulty: cfg.difficulty,
        placement: cfg.placement,
        constrained: cfg.constrained,
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

impl Application for WhacApp {
    fn hello(&mut self, hello: &Hello) -> Result<Hello, BridgeError> {
        self.hello = *hello;
        Ok(*hello)
    }

    fn reset(&mut self, config: &EpisodeConfig) -> Result<ObservationMsg, BridgeError> {
        self.start_episode(config)?;
        let hmd = self.last_hmd;
        let image = self.render(&hmd, None);
        Ok(ObservationMsg {
            image,
            reward: 0.0,
            is_finished: false,
            time_feature: self.game.time_feature(),
            log_entries: self.log_entries(None),
        })
    }

    fn step(&mut self, update: &StateUpdateMsg) -> Result<ObservationMsg, BridgeError> {
        Ok(self.advance(update)?)
    }
}

impl From<AppError> for BridgeError {
    fn from(e: AppError) -> Self {
        BridgeError::App(e.to_string())
    }
}
