use nalgebra::Vector3;
use rand::Rng;
use serde::Serialize;

use super::config::{GameConfig, PlacementFrame};
use super::curriculum::{cell_index, cell_of, CurriculumState, CELLS};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetState {
    Active,
    Hit,
    Expired,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub id: u64,
    pub cell: (usize, usize),
    pub position: Vector3<f64>,
    pub age: f64,
    pub state: TargetState,
}

impl Target {
    pub fn cell_index(&self) -> usize {
        cell_index(self.cell.0, self.cell.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Hit,
    SlowContact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactEvent {
    pub target: u64,
    pub cell: (usize, usize),
    pub outcome: Outcome,
    /// Hammer speed along the placement's required axis at contact.
    pub axial_speed: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CellStats {
    pub spawns: u64,
    pub hits: u64,
    pub misses: u64,
}

/// What one call to [`Game::spawn_update`] changed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpawnReport {
    pub expired: Vec<Target>,
    pub spawned: Option<Target>,
    /// Interval drawn for the next spawn, if a target was spawned.
    pub interval: Option<f64>,
}

/// Whac-A-Mole round state. Time only advances through [`Game::spawn_update`].
#[derive(Debug, Clone)]
pub struct Game {
    pub config: GameConfig,
    pub frame: PlacementFrame,
    pub curriculum: CurriculumState,
    active: Vec<Target>,
    clock: f64,
    since_spawn: f64,
    pending_interval: f64,
    next_id: u64,
    in_contact: Vec<u64>,
    pub score: u64,
    pub hits: u64,
    pub misses: u64,
    pub slow_contacts: u64,
    pub cells: [CellStats; CELLS],
    spawn_rng: StreamRng,
    cell_rng: StreamRng,
}

impl Game {
    /// A fresh round. The first target appears immediately.
    pub fn new(config: GameConfig, curriculum: CurriculumState) -> Self {
        let mut g = Self {
            frame: config.frame(),
            spawn_rng: rng::stream(config.seed, "spawn", 0),
            cell_rng: rng::stream(config.seed, "curriculum", 0),
            config,
            curriculum,
            active: Vec::new(),
            clock: 0.0,
            since_spawn: 0.0,
            pending_interval: 0.0,
            next_id: 0,
            in_contact: Vec::new(),
            score: 0,
            hits: 0,
            misses: 0,
            slow_contacts: 0,
            cells: [CellStats::default(); CELLS],
        };
        g.try_spawn();
        g
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn active(&self) -> &[Target] {
        &self.active
    }

    pub fn spawned(&self) -> u64 {
        self.next_id
    }

    pub fn max_targets(&self) -> usize {
        self.config.difficulty.max_targets()
    }

    pub fn is_finished(&self) -> bool {
        self.clock >= self.config.round_duration - 1e-9
    }

    pub fn time_feature(&self) -> f64 {
        (1.0 - self.clock / self.config.round_duration).clamp(0.0, 1.0)
    }

    /// Age targets by `dt`, expire the old ones and spawn at most one new one.
    pub fn spawn_update(&mut self, dt: f64) -> SpawnReport {
        let mut report = SpawnReport::default();
        self.clock += dt;
        self.since_spawn += dt;
        let lifespan = self.config.target_lifespan;
        for t in &mut self.active {
            t.age = (t.age + dt).min(lifespan);
        }
        let (expired, active): (Vec<_>, Vec<_>) = std::mem::take(&mut self.active)
            .into_iter()
            .partition(|t| t.age >= lifespan);
        self.active = active;
        for mut t in expired {
            t.state = TargetState::Expired;
            self.misses += 1;
            self.cells[t.cell_index()].misses += 1;
            self.in_contact.retain(|id| *id != t.id);
            report.expired.push(t);
        }
        let due = self.since_spawn >= self.pending_interval && self.active.len() < self.max_targets();
        if self.active.is_empty() || due {
            if let Some(t) = self.try_spawn() {
                report.spawned = Some(t);
                report.interval = Some(self.pending_interval);
            }
        }
        report
    }

    fn try_spawn(&mut self) -> Option<Target> {
        let mut free = [true; CELLS];
        for t in &self.active {
            free[t.cell_index()] = false;
        }
        let idx = self.curriculum.sample(&mut self.cell_rng, &free)?;
        let cell = cell_of(idx);
        let t = Target {
            id: self.next_id,
            cell,
            position: self.frame.cell_position(cell.0, cell.1, self.config.grid_spacing),
            age: 0.0,
            state: TargetState::Active,
        };
        self.next_id += 1;
        self.cells[idx].spawns += 1;
        self.active.push(t.clone());
        self.since_spawn = 0.0;
        self.pending_interval = self.spawn_rng.random::<f64>() * self.config.spawn_interval_max;
        Some(t)
    }

    /// Sphere test of the hammer head against every active target. A slow
    /// contact is reported once when contact begins and leaves the target active.
    pub fn check_hit(&mut self, tip: &Vector3<f64>, velocity: &Vector3<f64>) -> Vec<ContactEvent> {
        let reach = self.config.target_radius + self.config.hammer_radius;
        let axis = self.frame.hit_axis();
        let axial = velocity.dot(&axis);
        let mut events = Vec::new();
        let mut touching = Vec::new();
        let mut remaining = Vec::with_capacity(self.active.len());
        for t in std::mem::take(&mut self.active) {
            if (tip - t.position).norm() > reach {
                remaining.push(t);
                continue;
            }
            let fast = !self.config.constrained || axial >= self.config.velocity_threshold;
            if fast {
                self.score += 1;
                self.hits += 1;
                self.cells[t.cell_index()].hits += 1;
                events.push(ContactEvent {
                    target: t.id,
                    cell: t.cell,
                    outcome: Outcome::Hit,
                    axial_speed: axial,
                });
            } else {
                if !self.in_contact.contains(&t.id) {
                    self.slow_contacts += 1;
                    events.push(ContactEvent {
                        target: t.id,
                        cell: t.cell,
                        outcome: Outcome::SlowContact,
                        axial_speed: axial,
                    });
                }
                touching.push(t.id);
                remaining.push(t);
            }
        }
        self.active = remaining;
        self.in_contact = touching;
        events
    }

    /// Counters to carry into the next episode's curriculum.
    pub fn curriculum_counts(&self) -> ([u64; CELLS], [u64; CELLS]) {
        (self.cells.map(|c| c.spawns), self.cells.map(|c| c.misses))
    }
}
