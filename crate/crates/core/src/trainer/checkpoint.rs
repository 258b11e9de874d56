//! Versioned binary checkpoints in the bridge's little-endian wire encoding.
//!
//! ```text
//! magic "VRLPCKPT" | version u32 | config (JSON string)
//! params f64s | adam m f64s | adam v f64s | adam t u64
//! env steps u64 | updates u64 | update rng
//! env count u32, then per env:
//!   action rng | episode u64 | reset config (u32 count, string pairs)
//!   controls (u32 count, 6×f64 each) | placement rng
//! ```
//! An rng is its 32 seed bytes, stream u64 and word position as two u64 halves.

use super::env::EnvSnapshot;
use super::TrainError;
use crate::armsim::ACTUATORS;
use crate::bridge::wire::{WireReader, WireWriter};
use crate::bridge::{DecodeError, EpisodeConfig};
use crate::rng::RngState;

pub const MAGIC: &[u8; 8] = b"VRLPCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Serialized training configuration (JSON).
    pub config: String,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub adam_t: u64,
    pub steps: u64,
    pub updates: u64,
    pub update_rng: RngState,
    pub envs: Vec<(RngState, EnvSnapshot)>,
}

fn put_rng(w: &mut WireWriter, r: &RngState) {
    w.put_bytes(&r.seed);
    w.put_u64(r.stream);
    w.put_u64(r.word_pos as u64);
    w.put_u64((r.word_pos >> 64) as u64);
}

fn get_rng(r: &mut WireReader) -> Result<RngState, DecodeError> {
    let mut seed = [0u8; 32];
    seed.copy_from_slice(r.take(32)?);
    let stream = r.get_u64()?;
    let lo = r.get_u64()? as u128;
    let hi = r.get_u64()? as u128;
    Ok(RngState {
        seed,
        stream,
        word_pos: lo | (hi << 64),
    })
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = WireWriter::with_capacity(64 + 24 * self.params.len());
        w.put_bytes(MAGIC);
        w.put_u32(VERSION);
        w.put_str(&self.config);
        w.put_f64s(&self.params);
        w.put_f64s(&self.adam_m);
        w.put_f64s(&self.adam_v);
        w.put_u64(self.adam_t);
        w.put_u64(self.steps);
        w.put_u64(self.updates);
        put_rng(&mut w, &self.update_rng);
        w.put_u32(self.envs.len() as u32);
        for (rng, snap) in &self.envs {
            put_rng(&mut w, rng);
            w.put_u64(snap.episode);
            w.put_u32(snap.reset_config.0.len() as u32);
            for (k, v) in &snap.reset_config.0 {
                w.put_str(k);
                w.put_str(v);
            }
            w.put_u32(snap.controls.len() as u32);
            for c in &snap.controls {
                for u in c {
                    w.put_f64(*u);
                }
            }
            put_rng(&mut w, &snap.placement_rng);
        }
        w.into_inner()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TrainError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(TrainError::Checkpoint("not a checkpoint file".into()));
        }
        let mut r = WireReader::new(&bytes[MAGIC.len()..]);
        let bad = |e: DecodeError| TrainError::Checkpoint(format!("corrupt checkpoint: {e}"));
        let version = r.get_u32().map_err(bad)?;
        if version != VERSION {
            return Err(TrainError::Checkpoint(format!(
                "checkpoint version {version} is not supported (expected {VERSION})"
            )));
        }
        let mut body = || -> Result<Checkpoint, DecodeError> {
            let config = r.get_str()?;
            let params = r.get_f64s()?;
            let adam_m = r.get_f64s()?;
            let adam_v = r.get_f64s()?;
            let adam_t = r.get_u64()?;
            let steps = r.get_u64()?;
            let updates = r.get_u64()?;
            let update_rng = get_rng(&mut r)?;
            let n = r.get_u32()? as usize;
            let mut envs = Vec::with_capacity(n.min(1024));
            for _ in 0..n {
                let rng = get_rng(&mut r)?;
                let episode = r.get_u64()?;
                let pairs = r.get_u32()? as usize;
                let mut cfg = EpisodeConfig::new();
                for _ in 0..pairs {
                    let k = r.get_str()?;
                    let v = r.get_str()?;
                    cfg.0.push((k, v));
                }
                let count = r.get_u32()? as usize;
                if count.saturating_mul(8 * ACTUATORS) > r.remaining() {
                    return Err(DecodeError::Malformed("control count overruns file".into()));
                }
                let mut controls = Vec::with_capacity(count);
                for _ in 0..count {
                    let mut c = [0.0; ACTUATORS];
                    for u in c.iter_mut() {
                        *u = r.get_f64()?;
                    }
                    controls.push(c);
                }
                let placement_rng = get_rng(&mut r)?;
                envs.push((
                    rng,
                    EnvSnapshot {
                        episode,
                        reset_config: cfg,
                        controls,
                        placement_rng,
                    },
                ));
            }
            r.finish()?;
            Ok(Checkpoint {
                config,
                params,
                adam_m,
                adam_v,
                adam_t,
                steps,
                updates,
                update_rng,
                envs,
            })
        };
        body().map_err(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let rng = RngState {
            seed: [7; 32],
            stream: 3,
            word_pos: (5u128 << 70) | 9,
        };
        Checkpoint {
            config: "{}".into(),
            params: vec![1.0, -2.5],
            adam_m: vec![0.1, 0.2],
            adam_v: vec![0.3, 0.4],
            adam_t: 12,
            steps: 4000,
            updates: 1,
            update_rng: rng,
            envs: vec![(
                rng,
                EnvSnapshot {
                    episode: 2,
                    reset_config: EpisodeConfig::new().with("seed", 4),
                    controls: vec![[0.5; ACTUATORS], [0.0; ACTUATORS]],
                    placement_rng: rng,
                },
            )],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        assert_eq!(Checkpoint::decode(&c.encode()).unwrap(), c);
    }

    #[test]
    fn wrong_version_rejected() {
        let mut bytes = sample().encode();
        bytes[8] = 99;
        let err = Checkpoint::decode(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
    }

    #[test]
    fn truncation_rejected() {
        let bytes = sample().encode();
        for cut in [0, 5, 20, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err());
        }
    }
}
