//! Episode-level reweighting of spawn cells toward previously failed ones.

use rand::Rng;

use super::config::Curriculum;
use super::AppError;

pub const CELLS: usize = 9;
const UNIFORM: f64 = 1.0 / CELLS as f64;

pub fn cell_index(row: usize, col: usize) -> usize {
    row * 3 + col
}

pub fn cell_of(index: usize) -> (usize, usize) {
    (index / 3, index % 3)
}

/// Per-cell counters of the previous episode and the mode they feed.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub mode: Curriculum,
    pub spawns: [u64; CELLS],
    pub misses: [u64; CELLS],
}

impl CurriculumState {
    pub fn new(mode: Curriculum) -> Self {
        Self {
            mode,
            spawns: [0; CELLS],
            misses: [0; CELLS],
        }
    }

    pub fn with_counts(mode: Curriculum, spawns: [u64; CELLS], misses: [u64; CELLS]) -> Self {
        Self { mode, spawns, misses }
    }

    pub fn fail_rate(&self, cell: usize) -> f64 {
        self.misses[cell] as f64 / self.spawns[cell].max(1) as f64
    }

    /// Half uniform, half proportional to the previous episode's fail rates.
    pub fn distribution(&self) -> [f64; CELLS] {
        if self.mode == Curriculum::Uniform {
            return [UNIFORM; CELLS];
        }
        let rates: [f64; CELLS] = std::array::from_fn(|c| self.fail_rate(c));
        let sum: f64 = rates.iter().sum();
        if sum <= 0.0 {
            return [UNIFORM; CELLS];
        }
        rates.map(|r| 0.5 * UNIFORM + 0.5 * r / sum)
    }

    /// Draw a cell among those with `free[c]`, renormalizing the distribution.
    /// Returns `None` when no cell is free.
    pub fn sample<R: Rng>(&self, rng: &mut R, free: &[bool; CELLS]) -> Option<usize> {
        let p = self.distribution();
        let mass: f64 = (0..CELLS).filter(|&c| free[c]).map(|c| p[c]).sum();
        if mass <= 0.0 {
            return None;
        }
        let u = rng.random::<f64>() * mass;
        let mut acc = 0.0;
        let mut last = None;
        for c in (0..CELLS).filter(|&c| free[c]) {
            acc += p[c];
            last = Some(c);
            if u < acc {
                return last;
            }
        }
        last
    }

    /// Compact text form: `spawns/misses` per cell, comma separated.
    pub fn encode_prior(&self) -> String {
        (0..CELLS)
            .map(|c| format!("{}/{}", self.spawns[c], self.misses[c]))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn decode_prior(mode: Curriculum, s: &str) -> Result<Self, AppError> {
        let bad = || AppError::Config(format!("malformed curriculum prior '{s}'"));
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != CELLS {
            return Err(bad());
        }
        let mut out = Self::new(mode);
        for (c, part) in parts.iter().enumerate() {
            let (a, b) = part.split_once('/').ok_or_else(bad)?;
            out.spawns[c] = a.trim().parse().map_err(|_| bad())?;
            out.misses[c] = b.trim().parse().map_err(|_| bad())?;
            if out.misses[c] > out.spawns[c] {
                return Err(bad());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_fail_rates_fall_back_to_uniform() {
        let c = CurriculumState::new(Curriculum::Adaptive);
        assert!(c.distribution().iter().all(|p| *p == 1.0 / 9.0));
    }

    #[test]
    fn single_failing_cell() {
        let mut spawns = [3; CELLS];
        let mut misses = [0; CELLS];
        spawns[4] = 2;
        misses[4] = 2;
        let p = CurriculumState::with_counts(Curriculum::Adaptive, spawns, misses).distribution();
        assert!((p[4] - (0.5 / 9.0 + 0.5)).abs() < 1e-15);
        assert!((p[4] - 0.5556).abs() < 1e-4);
        for (c, v) in p.iter().enumerate() {
            if c != 4 {
                assert!((v - 0.5 / 9.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_mode_ignores_counts() {
        let c = CurriculumState::with_counts(Curriculum::Uniform, [1; CELLS], [1; CELLS]);
        assert_eq!(c.distribution(), [1.0 / 9.0; CELLS]);
    }

    #[test]
    fn occupied_cells_never_drawn() {
        let c = CurriculumState::new(Curriculum::Uniform);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut free = [true; CELLS];
        free[0] = false;
        free[8] = false;
        for _ in 0..1000 {
            let cell = c.sample(&mut rng, &free).unwrap();
            assert!(free[cell]);
        }
        assert_eq!(c.sample(&mut rng, &[false; CELLS]), None);
    }

    #[test]
    fn prior_text_round_trip() {
        let c = CurriculumState::with_counts(Curriculum::Adaptive, [4, 3, 2, 1, 0, 5, 6, 7, 8], [1, 0, 2, 0, 0, 5, 0, 1, 8]);
        let s = c.encode_prior();
        assert_eq!(CurriculumState::decode_prior(Curriculum::Adaptive, &s).unwrap(), c);
        assert!(CurriculumState::decode_prior(Curriculum::Adaptive, "1/2").is_err());
    }
}
