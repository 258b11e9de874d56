//! Observation assembly.
//!
//! Layout of the flat vector returned by [`observe`]:
//!
//! | slice | content | scale |
//! |-------|---------|-------|
//! | 0..3   | joint angles q | rad |
//! | 3..6   | joint velocities | rad/s × 0.1 |
//! | 6..9   | joint accelerations | rad/s² × 0.01 |
//! | 9..15  | actuator activations | [0,1] |
//! | 15..18 | hammer-tip position, bridge frame | m |
//! | 18..   | pooled headset cells, channel-major (R, G, B, D as selected), row-major within a channel | [0,1] |
//! | last   | time feature | [0,1] |
//!
//! With stacking enabled the delayed headset block follows the current one.

use serde::{Deserialize, Serialize};

use super::dynamics::ArmState;
use super::fatigue::FatigueState;
use super::kinematics::forward_kinematics;
use super::model::{ArmModel, ACTUATORS};
use super::ArmError;
use crate::bridge::{channel, CoordinateMap, RgbdImage};

pub const PROPRIOCEPTION_LEN: usize = 18;
const QDOT_SCALE: f64 = 0.1;
const QDDOT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadsetConfig {
    pub width: u16,
    pub height: u16,
    pub channel_mask: u8,
    /// Side of the square mean-pooling window, pixels.
    pub pool: u16,
    /// Depth at which the normalized depth saturates to 1, meters.
    pub far_plane: f64,
    /// Append a copy of the pooled image from this many steps earlier.
    pub stack_delay_steps: Option<usize>,
}

impl Default for HeadsetConfig {
    fn default() -> Self {
        Self {
            width: 120,
            height: 80,
            channel_mask: channel::GREEN | channel::DEPTH,
            pool: 8,
            far_plane: 2.0,
            stack_delay_steps: None,
        }
    }
}

impl HeadsetConfig {
    /// No visual input at all.
    pub fn disabled() -> Self {
        Self {
            width: 0,
            height: 0,
            channel_mask: 0,
            ..Self::default()
        }
    }

    pub fn enabled(&self) -> bool {
        self.channel_mask & channel::ALL != 0 && self.width > 0 && self.height > 0
    }

    pub fn channels(&self) -> Vec<u8> {
        [channel::RED, channel::GREEN, channel::BLUE, channel::DEPTH]
            .into_iter()
            .filter(|c| self.channel_mask & c != 0)
            .collect()
    }

    pub fn grid(&self) -> (usize, usize) {
        let p = self.pool.max(1) as usize;
        (self.width as usize / p, self.height as usize / p)
    }

    /// Length of one pooled image block.
    pub fn block_len(&self) -> usize {
        if !self.enabled() {
            return 0;
        }
        let (gw, gh) = self.grid();
        gw * gh * self.channels().len()
    }

    pub fn stacked_len(&self) -> usize {
        self.block_len() * if self.stack_delay_steps.is_some() { 2 } else { 1 }
    }
}

/// Mean of squared control signals.
pub fn neural_effort(controls: &[f64]) -> f64 {
    if controls.is_empty() {
        return 0.0;
    }
    controls.iter().map(|u| u * u).sum::<f64>() / controls.len() as f64
}

pub fn proprioception(model: &ArmModel, state: &ArmState, frame: &CoordinateMap) -> [f64; PROPRIOCEPTION_LEN] {
    let (_, tip) = forward_kinematics(model, &state.q);
    let tip = frame.map_point(&tip.position);
    let mut out = [0.0; PROPRIOCEPTION_LEN];
    out[0..3].copy_from_slice(&state.q);
    for j in 0..3 {
        out[3 + j] = state.qdot[j] * QDOT_SCALE;
        out[6 + j] = state.qddot[j] * QDDOT_SCALE;
    }
    out[9..9 + ACTUATORS].copy_from_slice(&state.activations);
    out[15..18].copy_from_slice(tip.as_slice());
    out
}

/// Mean-pool the selected channels of `image` into `[0,1]` cells.
pub fn pool_image(cfg: &HeadsetConfig, image: &RgbdImage) -> Result<Vec<f64>, ArmError> {
    if !cfg.enabled() {
        return Ok(Vec::new());
    }
    if image.width != cfg.width || image.height != cfg.height || !image.is_consistent() {
        return Err(ArmError::Observation(format!(
            "image is {}x{}, negotiated {}x{}",
            image.width, image.height, cfg.width, cfg.height
        )));
    }
    let p = cfg.pool.max(1) as usize;
    let (gw, gh) = cfg.grid();
    let w = image.width as usize;
    let inv = 1.0 / (p * p) as f64;
    let mut out = Vec::with_capacity(cfg.block_len());
    for ch in cfg.channels() {
        for cy in 0..gh {
            for cx in 0..gw {
                let mut acc = 0.0;
                for y in cy * p..(cy + 1) * p {
                    for x in cx * p..(cx + 1) * p {
                        let i = y * w + x;
                        acc += match ch {
                            channel::RED => image.rgb[3 * i] as f64 / 255.0,
                            channel::GREEN => image.rgb[3 * i + 1] as f64 / 255.0,
                            channel::BLUE => image.rgb[3 * i + 2] as f64 / 255.0,
                            _ => normalized_depth(image.depth[i], cfg.far_plane),
                        };
                    }
                }
                out.push(acc * inv);
            }
        }
    }
    Ok(out)
}

fn normalized_depth(d: f32, far: f64) -> f64 {
    if d.is_finite() {
        (d as f64 / far).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Flat observation vector; see the module docs for the layout.
/// `delayed` is the pooled block from `stack_delay_steps` earlier, if stacking.
pub fn observe(
    model: &ArmModel,
    frame: &CoordinateMap,
    cfg: &HeadsetConfig,
    state: &ArmState,
    _fatigue: &FatigueState,
    image: &RgbdImage,
    delayed: Option<&[f64]>,
    time_feature: f64,
) -> Result<Vec<f64>, ArmError> {
    let mut out = Vec::with_capacity(PROPRIOCEPTION_LEN + cfg.stacked_len() + 1);
    out.extend_from_slice(&proprioception(model, state, frame));
    let block = pool_image(cfg, image)?;
    out.extend_from_slice(&block);
    if cfg.stack_delay_steps.is_some() && cfg.enabled() {
        match delayed {
            Some(d) if d.len() == block.len() => out.extend_from_slice(d),
            Some(d) => {
                return Err(ArmError::Observation(format!(
                    "delayed block has {} cells, expected {}",
                    d.len(),
                    block.len()
                )))
            }
            None => out.extend_from_slice(&block),
        }
    }
    out.push(time_feature);
    Ok(out)
}

/// Ring buffer of past pooled blocks for visual stacking.
#[derive(Debug, Clone, Default)]
pub struct HeadsetHistory {
    blocks: std::collections::VecDeque<Vec<f64>>,
}

impl HeadsetHistory {
    pub fn clear(&mut self) {
        self.blocks.clear();
    }

    /// Record the newest block; return the one `delay` steps earlier (or the
    /// oldest available at the start of an episode).
    pub fn push(&mut self, block: Vec<f64>, delay: usize) -> Vec<f64> {
        self.blocks.push_back(block);
        while self.blocks.len() > delay + 1 {
            self.blocks.pop_front();
        }
        self.blocks.front().cloned().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::armsim::fatigue::FatigueParams;
    use rand::{Rng, SeedableRng};

    fn obs(image: &RgbdImage) -> Vec<f64> {
        let m = ArmModel::default();
        observe(
            &m,
            &CoordinateMap::identity(),
            &HeadsetConfig::default(),
            &ArmState::rest(),
            &FatigueState::rested(FatigueParams::default()),
            image,
            None,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn effort_examples() {
        assert_eq!(neural_effort(&[0.0; 6]), 0.0);
        assert_eq!(neural_effort(&[1.0; 6]), 1.0);
        assert!((neural_effort(&[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]) - 0.25 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn black_image_gives_zero_colour_block() {
        let mut img = RgbdImage::new(120, 80);
        img.depth.iter_mut().for_each(|d| *d = 0.0);
        let v = obs(&img);
        assert_eq!(v.len(), PROPRIOCEPTION_LEN + 2 * 150 + 1);
        assert!(v[PROPRIOCEPTION_LEN..v.len() - 1].iter().all(|x| *x == 0.0));
        // Rest state: zero joints, zero activations.
        assert!(v[..15].iter().all(|x| *x == 0.0));
        assert_eq!(*v.last().unwrap(), 1.0);
    }

    #[test]
    fn uniform_green_pools_to_constant() {
        let mut img = RgbdImage::new(120, 80);
        for px in img.rgb.chunks_mut(3) {
            px[1] = 128;
        }
        let v = obs(&img);
        let green = &v[PROPRIOCEPTION_LEN..PROPRIOCEPTION_LEN + 150];
        assert!(green.iter().all(|g| (*g - 128.0 / 255.0).abs() < 1e-12));
        // Background depth is +inf, which saturates to 1.
        let depth = &v[PROPRIOCEPTION_LEN + 150..v.len() - 1];
        assert!(depth.iter().all(|d| *d == 1.0));
    }

    #[test]
    fn pooled_cells_are_block_means() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut img = RgbdImage::new(120, 80);
        rng.fill(img.rgb.as_mut_slice());
        for d in img.depth.iter_mut() {
            *d = rng.random_range(0.0..3.0);
        }
        let cfg = HeadsetConfig::default();
        let cells = pool_image(&cfg, &img).unwrap();
        for cy in 0..10 {
            for cx in 0..15 {
                let mut g = 0.0;
                let mut d = 0.0;
                for y in 0..8 {
                    for x in 0..8 {
                        let (px, py) = (cx * 8 + x, cy * 8 + y);
                        g += img.rgb_at(px, py)[1] as f64 / 255.0;
                        d += (img.depth_at(px, py) as f64 / 2.0).min(1.0);
                    }
                }
                assert!((cells[cy * 15 + cx] - g / 64.0).abs() < 1e-6);
                assert!((cells[150 + cy * 15 + cx] - d / 64.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let cfg = HeadsetConfig::default();
        assert!(pool_image(&cfg, &RgbdImage::new(64, 64)).is_err());
    }

    #[test]
    fn history_returns_delayed_block() {
        let mut h = HeadsetHistory::default();
        let mut got = vec![];
        for i in 0..6 {
            got.push(h.push(vec![i as f64], 4)[0]);
        }
        assert_eq!(got, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }
}
