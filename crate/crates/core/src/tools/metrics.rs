//! Per-round metrics computed from episode logs.

use serde::Serialize;

use super::ToolsError;
use crate::bridge::{read_dump, Message};
use crate::trainer::eval::EvalSetting;
use crate::whacapp::{Difficulty, EpisodeRecord, GameConfig, Placement};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    /// Evaluation setting, present for evaluation logs.
    pub setting: Option<EvalSetting>,
    pub round: Option<usize>,
    pub episode: u64,
    pub seed: u64,
    pub difficulty: Difficulty,
    pub placement: Placement,
    pub constrained: bool,
    pub hits: u64,
    pub misses: u64,
    pub slow_contacts: u64,
    /// `hits / (hits + misses)`, empty when both are zero.
    pub hit_rate: Option<f64>,
    pub hitting_speeds: Vec<f64>,
    pub hammer_depths: Vec<f64>,
    /// Row-major 3×3 grid; a cell that never spawned has no rate.
    pub per_cell_hit_rate: [[Option<f64>; 3]; 3],
    pub per_cell_hits: [[u64; 3]; 3],
    pub per_cell_spawns: [[u64; 3]; 3],
    /// Largest mean-over-actuators fatigued fraction during the round.
    pub max_fatigued: f64,
}

pub fn hit_rate(hits: u64, misses: u64) -> Option<f64> {
    (hits + misses > 0).then(|| hits as f64 / (hits + misses) as f64)
}

impl RoundMetrics {
    pub fn from_record(
        rec: &EpisodeRecord,
        setting: Option<EvalSetting>,
        round: Option<usize>,
    ) -> Result<Self, String> {
        if rec.per_cell.len() != 9 {
            return Err(format!("expected 9 cells, found {}", rec.per_cell.len()));
        }
        let mut rate = [[None; 3]; 3];
        let mut hits = [[0; 3]; 3];
        let mut spawns = [[0; 3]; 3];
        for (i, c) in rec.per_cell.iter().enumerate() {
            if c.hits > c.spawns {
                return Err(format!("cell {i} has {} hits but {} spawns", c.hits, c.spawns));
            }
            let (r, col) = (i / 3, i % 3);
            hits[r][col] = c.hits;
            spawns[r][col] = c.spawns;
            rate[r][col] = (c.spawns > 0).then(|| c.hits as f64 / c.spawns as f64);
        }
        Ok(Self {
            setting,
            round,
            episode: rec.episode,
            seed: rec.seed,
            difficulty: rec.difficulty,
            placement: rec.placement,
            constrained: rec.constrained,
            hits: rec.hits,
            misses: rec.misses,
            slow_contacts: rec.slow_contacts,
            hit_rate: hit_rate(rec.hits, rec.misses),
            hitting_speeds: rec.hit_speeds.clone(),
            hammer_depths: rec.hammer_depths.clone(),
            per_cell_hit_rate: rate,
            per_cell_hits: hits,
            per_cell_spawns: spawns,
            max_fatigued: rec.max_fatigue,
        })
    }
}

#[derive(serde::Deserialize)]
struct LogLine {
    setting: Option<EvalSetting>,
    round: Option<usize>,
    #[serde(flatten)]
    episode: EpisodeRecord,
}

/// Parse JSON-lines episode or evaluation logs. Blank lines are skipped.
pub fn metrics_from_log(text: &str) -> Result<Vec<RoundMetrics>, ToolsError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| ToolsError::Log { line: i + 1, message };
        let rec: LogLine = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        out.push(RoundMetrics::from_record(&rec.episode, rec.setting, rec.round).map_err(bad)?);
    }
    Ok(out)
}

/// Hammer depth after every STATE_UPDATE of a recorded session, one list
/// per episode. Episode settings are taken from each RESET applied to `base`.
pub fn depths_from_dump(bytes: &[u8], base: &GameConfig) -> Result<Vec<Vec<f64>>, ToolsError> {
    let frames =
        read_dump(bytes).map_err(|(i, e)| ToolsError::Dump(format!("frame {i}: {e}")))?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut game: Option<GameConfig> = None;
    for (i, (msg, _)) in frames.iter().enumerate() {
        match msg {
            Message::Reset(cfg) => {
                let mut g = base.clone();
                g.apply(cfg).map_err(|e| ToolsError::Dump(format!("frame {i}: {e}")))?;
                game = Some(g);
                out.push(Vec::new());
            }
            Message::StateUpdate(u) => {
                let (Some(g), Some(depths)) = (&game, out.last_mut()) else {
                    return Err(ToolsError::Dump(format!("frame {i}: state update before reset")));
                };
                let ctrl = u
                    .controllers
                    .first()
                    .ok_or_else(|| ToolsError::Dump(format!("frame {i}: no controller pose")))?;
                let tip = ctrl.transform_point(&nalgebra::Vector3::from(g.hammer_offset));
                depths.push(g.frame().depth_of(&tip));
            }
            _ => {}
        }
    }
    Ok(out)
}
