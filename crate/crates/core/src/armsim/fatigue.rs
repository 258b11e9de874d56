//! Three-compartment controller fatigue model with rest recovery (3CC-r).
//!
//! Each actuator's motor-unit pool is split into resting (`m_r`), active
//! (`m_a`) and fatigued (`m_f`) percentages that always sum to 100.

use serde::{Deserialize, Serialize};

use super::model::{ACTUATORS, DOF};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FatigueParams {
    /// Fatigue rate F, 1/s.
    pub fatigue_rate: f64,
    /// Recovery rate R, 1/s.
    pub recovery_rate: f64,
    /// Rest-recovery multiplier r.
    pub rest_multiplier: f64,
    /// Activation drive LD, 1/s.
    pub activation_drive: f64,
    /// Deactivation drive LR, 1/s.
    pub deactivation_drive: f64,
}

impl Default for FatigueParams {
    fn default() -> Self {
        Self {
            fatigue_rate: 0.0146,
            recovery_rate: 0.0022,
            rest_multiplier: 7.5,
            activation_drive: 10.0,
            deactivation_drive: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FatigueState {
    pub m_r: [f64; ACTUATORS],
    pub m_a: [f64; ACTUATORS],
    pub m_f: [f64; ACTUATORS],
    pub params: FatigueParams,
}

impl FatigueState {
    pub fn rested(params: FatigueParams) -> Self {
        Self {
            m_r: [100.0; ACTUATORS],
            m_a: [0.0; ACTUATORS],
            m_f: [0.0; ACTUATORS],
            params,
        }
    }

    /// Mean fatigued fraction over actuators, in [0, 1].
    pub fn mean_fatigued(&self) -> f64 {
        self.m_f.iter().sum::<f64>() / (100.0 * ACTUATORS as f64)
    }

    pub fn total(&self, i: usize) -> f64 {
        self.m_r[i] + self.m_a[i] + self.m_f[i]
    }
}

/// Right-hand side for one actuator; returns `(dm_r, dm_a, dm_f)`.
pub fn derivatives(p: &FatigueParams, target_load: f64, m_r: f64, m_a: f64, m_f: f64) -> (f64, f64, f64) {
    let drive = if m_a < target_load {
        if m_r >= target_load - m_a {
            p.activation_drive * (target_load - m_a)
        } else {
            p.activation_drive * m_r
        }
    } else {
        p.deactivation_drive * (target_load - m_a)
    };
    let resting = target_load < m_a || target_load == 0.0;
    let recovery = if resting {
        p.rest_multiplier * p.recovery_rate
    } else {
        p.recovery_rate
    };
    let dr = -drive + recovery * m_f;
    let da = drive - p.fatigue_rate * m_a;
    let df = p.fatigue_rate * m_a - recovery * m_f;
    (dr, da, df)
}

/// One explicit RK4 step of length `dt` per actuator. The result is projected
/// back onto the simplex so round-off can neither break conservation nor push
/// a compartment below zero.
pub fn fatigue_step(state: &FatigueState, target_load: &[f64; ACTUATORS], dt: f64) -> FatigueState {
    let p = state.params;
    let mut out = *state;
    for i in 0..ACTUATORS {
        let tl = target_load[i].clamp(0.0, 100.0);
        let f = |r: f64, a: f64, m: f64| derivatives(&p, tl, r, a, m);
        let (r0, a0, f0) = (state.m_r[i], state.m_a[i], state.m_f[i]);
        let k1 = f(r0, a0, f0);
        let k2 = f(r0 + 0.5 * dt * k1.0, a0 + 0.5 * dt * k1.1, f0 + 0.5 * dt * k1.2);
        let k3 = f(r0 + 0.5 * dt * k2.0, a0 + 0.5 * dt * k2.1, f0 + 0.5 * dt * k2.2);
        let k4 = f(r0 + dt * k3.0, a0 + dt * k3.1, f0 + dt * k3.2);
        let a = a0 + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        let m = f0 + dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        let a = a.clamp(0.0, 100.0);
        let m = m.clamp(0.0, 100.0 - a);
        out.m_a[i] = a;
        out.m_f[i] = m;
        out.m_r[i] = (100.0 - a - m).max(0.0);
    }
    out
}

/// Fatigue drive per actuator: the net-active actuator of each antagonistic
/// pair carries `100·|a_ag − a_ant|`, the other carries none.
pub fn target_load(activations: &[f64; ACTUATORS]) -> [f64; ACTUATORS] {
    let mut tl = [0.0; ACTUATORS];
    for j in 0..DOF {
        let net = activations[2 * j] - activations[2 * j + 1];
        if net >= 0.0 {
            tl[2 * j] = 100.0 * net;
        } else {
            tl[2 * j + 1] = -100.0 * net;
        }
    }
    tl
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn full_rest_is_fixed_point() {
        let s = FatigueState::rested(FatigueParams::default());
        let s1 = fatigue_step(&s, &[0.0; ACTUATORS], 0.05);
        assert_eq!(s, s1);
        assert_eq!(derivatives(&s.params, 0.0, 100.0, 0.0, 0.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn conservation_over_random_loads() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut s = FatigueState::rested(FatigueParams::default());
        for _ in 0..20_000 {
            let tl: [f64; ACTUATORS] = std::array::from_fn(|_| rng.random_range(0.0..=100.0));
            s = fatigue_step(&s, &tl, rng.random_range(0.001..0.2));
            for i in 0..ACTUATORS {
                assert!((s.total(i) - 100.0).abs() < 1e-9);
                assert!(s.m_r[i] >= 0.0 && s.m_a[i] >= 0.0 && s.m_f[i] >= 0.0);
            }
        }
    }

    #[test]
    fn sustained_load_builds_fatigue_and_rest_recovers() {
        let mut s = FatigueState::rested(FatigueParams::default());
        let load = [50.0; ACTUATORS];
        for _ in 0..600 {
            s = fatigue_step(&s, &load, 0.05);
        }
        let tired = s.m_f[0];
        assert!(tired > 5.0);
        for _ in 0..600 {
            s = fatigue_step(&s, &[0.0; ACTUATORS], 0.05);
        }
        assert!(s.m_f[0] < tired);
    }

    #[test]
    fn net_activation_drives_one_side() {
        let tl = target_load(&[0.6, 0.2, 0.0, 0.5, 0.3, 0.3]);
        assert!((tl[0] - 40.0).abs() < 1e-12);
        assert_eq!(tl[1], 0.0);
        assert_eq!(tl[2], 0.0);
        assert_eq!(tl[3], 50.0);
        assert_eq!(&tl[4..], &[0.0, 0.0]);
    }
}
