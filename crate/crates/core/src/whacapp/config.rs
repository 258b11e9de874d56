use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::AppError;
use crate::bridge::EpisodeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn max_targets(self) -> usize {
        match self {
            Difficulty::Easy => 1,
            Difficulty::Medium => 3,
            Difficulty::Hard => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Low,
    Mid,
    High,
}

impl Placement {
    pub const ALL: [Placement; 3] = [Placement::Low, Placement::Mid, Placement::High];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curriculum {
    Uniform,
    Adaptive,
}

macro_rules! text_enum {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }
        impl FromStr for $t {
            type Err = AppError;
            fn from_str(s: &str) -> Result<Self, AppError> {
                match s {
                    $($s => Ok(Self::$v),)+
                    _ => Err(AppError::Config(format!("unknown {} '{s}'", stringify!($t)))),
                }
            }
        }
    };
}

text_enum!(Difficulty, Easy => "easy", Medium => "medium", Hard => "hard");
text_enum!(Placement, Low => "low", Mid => "mid", High => "high");
text_enum!(Curriculum, Uniform => "uniform", Adaptive => "adaptive");

/// Pose of the 3×3 target area relative to the HMD, which sits at the
/// application-frame origin looking along −z with y up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementFrame {
    /// Centre of the target area: x right, y up, z backwards (meters).
    pub offset: [f64; 3],
    /// Rotation about the lateral axis in degrees; positive leans the top
    /// edge away from the user so the area faces upwards.
    pub tilt_deg: f64,
    /// Direction a constrained hit must move along.
    pub hit_axis: [f64; 3],
}

impl PlacementFrame {
    pub fn preset(p: Placement) -> Self {
        const DOWN: [f64; 3] = [0.0, -1.0, 0.0];
        const FORWARD: [f64; 3] = [0.0, 0.0, -1.0];
        match p {
            Placement::Low => Self {
                offset: [0.15, -0.30, -0.35],
                tilt_deg: 45.0,
                hit_axis: DOWN,
            },
            Placement::Mid => Self {
                offset: [0.15, -0.10, -0.40],
                tilt_deg: 0.0,
                hit_axis: FORWARD,
            },
            Placement::High => Self {
                offset: [0.15, 0.20, -0.30],
                tilt_deg: -45.0,
                hit_axis: FORWARD,
            },
        }
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from(self.offset)
    }

    pub fn lateral(&self) -> Vector3<f64> {
        Vector3::x()
    }

    /// In-plane "up" direction of the grid.
    pub fn up(&self) -> Vector3<f64> {
        let t = self.tilt_deg.to_radians();
        Vector3::new(0.0, t.cos(), -t.sin())
    }

    /// Plane normal pointing back towards the user.
    pub fn normal(&self) -> Vector3<f64> {
        let t = self.tilt_deg.to_radians();
        Vector3::new(0.0, t.sin(), t.cos())
    }

    pub fn hit_axis(&self) -> Vector3<f64> {
        Vector3::from(self.hit_axis).normalize()
    }

    /// Cell `(row, col)`, row 0 at the top, col 0 on the left.
    pub fn cell_position(&self, row: usize, col: usize, spacing: f64) -> Vector3<f64> {
        self.center()
            + self.lateral() * (col as f64 - 1.0) * spacing
            + self.up() * (1.0 - row as f64) * spacing
    }

    /// Signed distance of `p` behind the target plane (positive = through the plane).
    pub fn depth_of(&self, p: &Vector3<f64>) -> f64 {
        -(p - self.center()).dot(&self.normal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub score: f64,
    pub contact: f64,
    pub distance: f64,
    pub effort: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            score: 10.0,
            contact: 2.5,
            distance: 1.0,
            effort: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub difficulty: Difficulty,
    pub placement: Placement,
    pub constrained: bool,
    pub curriculum: Curriculum,
    pub seed: u64,
    pub round_duration: f64,
    pub grid_spacing: f64,
    pub target_radius: f64,
    pub target_lifespan: f64,
    /// Spawn intervals are drawn uniformly from `[0, spawn_interval_max]`.
    pub spawn_interval_max: f64,
    pub velocity_threshold: f64,
    pub hammer_radius: f64,
    /// Hammer head relative to the controller (grip) frame.
    pub hammer_offset: [f64; 3],
    pub weights: RewardWeights,
    /// Replaces the preset frame for `placement` when set.
    pub placement_frame: Option<PlacementFrame>,
    /// Far edge of the target area quad beyond the outer cells, meters.
    pub area_margin: f64,
    /// Camera vertical field of view, degrees.
    pub vertical_fov_deg: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            difficulty: Difficulty::Medium,
            placement: Placement::Mid,
            constrained: true,
            curriculum: Curriculum::Uniform,
            seed: 0,
            round_duration: 60.0,
            grid_spacing: 0.125,
            target_radius: 0.025,
            target_lifespan: 1.0,
            spawn_interval_max: 0.5,
            velocity_threshold: 0.8,
            hammer_radius: 0.03,
            hammer_offset: [0.0, -0.1, 0.0],
            weights: RewardWeights::default(),
            placement_frame: None,
            area_margin: 0.075,
            vertical_fov_deg: 90.0,
        }
    }
}

/// Episode-config keys understood by the application.
pub const EPISODE_KEYS: [&str; 7] = [
    "seed",
    "difficulty",
    "placement",
    "constrained",
    "curriculum",
    "round_duration",
    "curriculum_prior",
];

impl GameConfig {
    pub fn frame(&self) -> PlacementFrame {
        self.placement_frame
            .unwrap_or_else(|| PlacementFrame::preset(self.placement))
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let positive = [
            ("round_duration", self.round_duration),
            ("grid_spacing", self.grid_spacing),
            ("target_radius", self.target_radius),
            ("target_lifespan", self.target_lifespan),
            ("hammer_radius", self.hammer_radius),
            ("vertical_fov_deg", self.vertical_fov_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AppError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.spawn_interval_max >= 0.0) {
            return Err(AppError::Config("spawn_interval_max must be non-negative".into()));
        }
        Ok(())
    }

    /// Overlay the recognised keys of an episode config.
    pub fn apply(&mut self, cfg: &EpisodeConfig) -> Result<(), AppError> {
        for (k, v) in &cfg.0 {
            let bad = |e: String| AppError::Config(format!("episode key {k}='{v}': {e}"));
            match k.as_str() {
                "seed" => self.seed = v.parse().map_err(|e| bad(format!("{e}")))?,
                "difficulty" => self.difficulty = v.parse()?,
                "placement" => self.placement = v.parse()?,
                "constrained" => self.constrained = v.parse().map_err(|e| bad(format!("{e}")))?,
                "curriculum" => self.curriculum = v.parse()?,
                "round_duration" => {
                    self.round_duration = v.parse().map_err(|e| bad(format!("{e}")))?
                }
                "curriculum_prior" => {}
                _ => return Err(AppError::Config(format!("unknown episode key '{k}'"))),
            }
        }
        self.validate()
    }

    /// The episode config that reproduces this game's per-episode settings.
    pub fn to_episode_config(&self) -> EpisodeConfig {
        EpisodeConfig::new()
            .with("seed", self.seed)
            .with("difficulty", self.difficulty)
            .with("placement", self.placement)
            .with("constrained", self.constrained)
            .with("curriculum", self.curriculum)
            .with("round_duration", self.round_duration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difficulty_caps() {
        assert_eq!(Difficulty::Easy.max_targets(), 1);
        assert_eq!(Difficulty::Medium.max_targets(), 3);
        assert_eq!(Difficulty::Hard.max_targets(), 5);
    }

    #[test]
    fn presets_are_right_of_the_hmd() {
        for p in Placement::ALL {
            assert_eq!(PlacementFrame::preset(p).offset[0], 0.15);
        }
        let low = PlacementFrame::preset(Placement::Low);
        assert_eq!(low.offset, [0.15, -0.30, -0.35]);
    }

    #[test]
    fn tilted_frames_face_the_user() {
        let low = PlacementFrame::preset(Placement::Low);
        assert!(low.normal().y > 0.0 && low.normal().z > 0.0);
        let high = PlacementFrame::preset(Placement::High);
        assert!(high.normal().y < 0.0 && high.normal().z > 0.0);
        let mid = PlacementFrame::preset(Placement::Mid);
        assert!((mid.normal() - Vector3::z()).norm() < 1e-15);
        for f in [low, mid, high] {
            assert!(f.up().dot(&f.normal()).abs() < 1e-15);
            for r in 0..3 {
                for c in 0..3 {
                    assert!(f.depth_of(&f.cell_position(r, c, 0.125)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn episode_config_round_trip() {
        let mut g = GameConfig {
            difficulty: Difficulty::Hard,
            placement: Placement::Low,
            constrained: false,
            seed: 42,
            ..GameConfig::default()
        };
        let cfg = g.to_episode_config();
        let mut h = GameConfig::default();
        h.apply(&cfg).unwrap();
        g.placement_frame = None;
        assert_eq!(g, h);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut g = GameConfig::default();
        assert!(g.apply(&EpisodeConfig::new().with("colour", "blue")).is_err());
        assert!(g.apply(&EpisodeConfig::new().with("difficulty", "brutal")).is_err());
    }
}
