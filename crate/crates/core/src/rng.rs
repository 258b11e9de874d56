//! Seed derivation. Every random stream is a ChaCha8 stream keyed by a seed
//! derived from the master seed and a stream id, so adding a stream never
//! shifts the numbers drawn by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn stream names into ids.
pub fn hash_name(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    mix64(mix64(master ^ hash_name(stream)).wrapping_add(index))
}

pub fn stream(master: u64, name: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, name, index));
    rng.set_stream(hash_name(name));
    rng
}

/// Serializable position of a stream: (seed words, stream id, word position).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

pub fn save(rng: &StreamRng) -> RngState {
    RngState {
        seed: rng.get_seed(),
        stream: rng.get_stream(),
        word_pos: rng.get_word_pos(),
    }
}

pub fn restore(state: &RngState) -> StreamRng {
    let mut rng = ChaCha8Rng::from_seed(state.seed);
    rng.set_stream(state.stream);
    rng.set_word_pos(state.word_pos);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_each_other() {
        let a: Vec<u64> = (0..4).map(|_| 0).collect();
        let mut s1 = stream(7, "spawn", 0);
        let mut s2 = stream(7, "curriculum", 0);
        let x: Vec<u64> = (0..4).map(|_| s1.random()).collect();
        let y: Vec<u64> = (0..4).map(|_| s2.random()).collect();
        assert_ne!(x, y);
        assert_ne!(x, a);
    }

    #[test]
    fn save_restore_continues_sequence() {
        let mut r = stream(1, "x", 3);
        let _: u64 = r.random();
        let st = save(&r);
        let expect: Vec<u32> = (0..5).map(|_| r.random()).collect();
        let mut r2 = restore(&st);
        let got: Vec<u32> = (0..5).map(|_| r2.random()).collect();
        assert_eq!(expect, got);
    }
}
