use nalgebra::Vector3;
use serde::Serialize;

use super::config::RewardWeights;
use super::game::{ContactEvent, Outcome, Target};

/// Per-step reward components and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardBreakdown {
    /// Score increment this step.
    pub s: f64,
    /// Minus the number of new slow contacts.
    pub c_c: f64,
    /// Minus the summed hammer distance to the active targets.
    pub c_d: f64,
    /// Minus the mean fatigued fraction.
    pub c_e: f64,
    /// Hammer speed, m/s.
    pub v_h: f64,
    pub total: f64,
}

impl RewardBreakdown {
    /// `w_s·S + w_c·v_h·C_c + w_d·C_d + w_e·C_e`, evaluated left to right.
    pub fn combine(w: &RewardWeights, s: f64, c_c: f64, c_d: f64, c_e: f64, v_h: f64) -> Self {
        let total = w.score * s + w.contact * v_h * c_c + w.distance * c_d + w.effort * c_e;
        Self { s, c_c, c_d, c_e, v_h, total }
    }

    pub fn recompose(&self, w: &RewardWeights) -> f64 {
        Self::combine(w, self.s, self.c_c, self.c_d, self.c_e, self.v_h).total
    }
}

/// `active` are the targets still standing after this step's hits;
/// `fatigue` is the user-side mean fatigued fraction in [0, 1].
pub fn compute_reward(
    w: &RewardWeights,
    events: &[ContactEvent],
    tip: &Vector3<f64>,
    v_h: f64,
    active: &[Target],
    fatigue: f64,
) -> RewardBreakdown {
    let hits = events.iter().filter(|e| e.outcome == Outcome::Hit).count();
    let slow = events.len() - hits;
    let distance: f64 = active.iter().map(|t| (tip - t.position).norm()).sum();
    RewardBreakdown::combine(w, hits as f64, -(slow as f64), -distance, -fatigue, v_h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whacapp::game::TargetState;

    fn target(p: Vector3<f64>) -> Target {
        Target {
            id: 0,
            cell: (1, 1),
            position: p,
            age: 0.0,
            state: TargetState::Active,
        }
    }

    fn event(outcome: Outcome) -> ContactEvent {
        ContactEvent {
            target: 0,
            cell: (0, 0),
            outcome,
            axial_speed: 0.0,
        }
    }

    #[test]
    fn single_hit_is_worth_ten() {
        let r = compute_reward(&RewardWeights::default(), &[event(Outcome::Hit)], &Vector3::zeros(), 1.2, &[], 0.0);
        assert_eq!(r.total, 10.0);
    }

    #[test]
    fn distance_only() {
        let t = target(Vector3::new(0.0, 0.0, -0.3));
        let r = compute_reward(&RewardWeights::default(), &[], &Vector3::zeros(), 0.0, &[t], 0.0);
        assert_eq!(r.total, -0.3);
    }

    #[test]
    fn slow_contact_scaled_by_speed() {
        let r = compute_reward(&RewardWeights::default(), &[event(Outcome::SlowContact)], &Vector3::zeros(), 0.5, &[], 0.0);
        assert_eq!(r.total, -1.25);
    }

    #[test]
    fn effort_weight() {
        let r = compute_reward(&RewardWeights::default(), &[], &Vector3::zeros(), 0.0, &[], 0.2);
        assert!((r.total + 0.02).abs() < 1e-15);
    }
}
