//! Closed-form forecasts of how each reward component accumulates over an
//! episode under idealized hammer behaviour.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::ToolsError;
use crate::whacapp::RewardBreakdown;
use crate::whacapp::{GameConfig, RewardWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Hammer stays at the initial position; nothing is ever hit.
    WorstCase,
    /// Hammer sits on the target; one hit per target lifespan.
    BestCase,
    /// Hammer moves linearly from initial to target over the horizon.
    LinearInterp,
    /// Hammer moves along `initial + (target − initial)·f²`.
    QuadraticInterp,
}

impl std::str::FromStr for ScenarioKind {
    type Err = ToolsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "worst_case" => Ok(Self::WorstCase),
            "best_case" => Ok(Self::BestCase),
            "linear_interp" => Ok(Self::LinearInterp),
            "quadratic_interp" => Ok(Self::QuadraticInterp),
            _ => Err(ToolsError::Invalid(format!("unknown scenario `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingScenario {
    pub kind: ScenarioKind,
    /// Episode horizon in control steps.
    pub horizon: usize,
    pub dt: f64,
    pub initial: [f64; 3],
    pub target: [f64; 3],
    /// Constant fatigue proxy fed to the effort term.
    pub effort_level: f64,
}

impl ScalingScenario {
    pub fn validate(&self) -> Result<(), ToolsError> {
        let finite = self.initial.iter().chain(&self.target).all(|x| x.is_finite());
        if self.horizon == 0 || !(self.dt > 0.0) || !finite || !(self.effort_level >= 0.0) {
            return Err(ToolsError::Invalid(
                "scenario needs horizon ≥ 1, dt > 0, finite positions and effort ≥ 0".into(),
            ));
        }
        Ok(())
    }

    /// Hammer position and hit count at step `k`.
    fn at(&self, k: usize, lifespan_steps: usize) -> (Vector3<f64>, f64) {
        let a = Vector3::from(self.initial);
        let b = Vector3::from(self.target);
        let f = (k + 1) as f64 / self.horizon as f64;
        let last = k + 1 == self.horizon;
        match self.kind {
            ScenarioKind::WorstCase => (a, 0.0),
            ScenarioKind::BestCase => (b, if k % lifespan_steps == 0 { 1.0 } else { 0.0 }),
            ScenarioKind::LinearInterp => (if last { b } else { a + (b - a) * f }, last as u8 as f64),
            ScenarioKind::QuadraticInterp => (if last { b } else { a + (b - a) * f * f }, last as u8 as f64),
        }
    }
}

/// Weighted per-step contributions and their running sums.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleRow {
    pub step: usize,
    pub time: f64,
    pub distance: f64,
    pub score: f64,
    pub contact: f64,
    pub distance_term: f64,
    pub effort: f64,
    pub total: f64,
    pub cum_score: f64,
    pub cum_contact: f64,
    pub cum_distance: f64,
    pub cum_effort: f64,
    pub cum_total: f64,
    /// `|cum component| / |cum total|`, empty when the total is zero.
    pub dom_score: Option<f64>,
    pub dom_contact: Option<f64>,
    pub dom_distance: Option<f64>,
    pub dom_effort: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleReport {
    pub scenario: ScalingScenario,
    pub weights: RewardWeights,
    pub rows: Vec<ScaleRow>,
}

impl ScaleReport {
    pub fn final_row(&self) -> &ScaleRow {
        self.rows.last().expect("horizon ≥ 1")
    }

    pub fn to_csv(&self) -> Result<String, ToolsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        super::finish_csv(w)
    }
}

pub fn reward_scale_report(
    weights: &RewardWeights,
    scenario: &ScalingScenario,
    game: &GameConfig,
) -> Result<ScaleReport, ToolsError> {
    scenario.validate()?;
    let lifespan_steps = ((game.target_lifespan / scenario.dt).round() as usize).max(1);
    let target = Vector3::from(scenario.target);
    let mut rows = Vec::with_capacity(scenario.horizon);
    let mut cum = [0.0; 5];
    for k in 0..scenario.horizon {
        let (pos, hits) = scenario.at(k, lifespan_steps);
        let d = (target - pos).norm();
        let (s, c_d, c_e) = (hits, -d, -scenario.effort_level);
        let score = weights.score * s;
        let contact = 0.0;
        let distance_term = weights.distance * c_d;
        let effort = weights.effort * c_e;
        let total = RewardBreakdown::combine(weights, s, 0.0, c_d, c_e, 0.0).total;
        for (c, v) in cum.iter_mut().zip([score, contact, distance_term, effort, total]) {
            *c += v;
        }
        let dom = |x: f64| (cum[4] != 0.0).then(|| x.abs() / cum[4].abs());
        rows.push(ScaleRow {
            step: k,
            time: (k + 1) as f64 * scenario.dt,
            distance: d,
            score,
            contact,
            distance_term,
            effort,
            total,
            cum_score: cum[0],
            cum_contact: cum[1],
            cum_distance: cum[2],
            cum_effort: cum[3],
            cum_total: cum[4],
            dom_score: dom(cum[0]),
            dom_contact: dom(cum[1]),
            dom_distance: dom(cum[2]),
            dom_effort: dom(cum[3]),
        });
    }
    Ok(ScaleReport {
        scenario: scenario.clone(),
        weights: *weights,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(kind: ScenarioKind, horizon: usize) -> ScalingScenario {
        ScalingScenario {
            kind,
            horizon,
            dt: 0.05,
            initial: [0.0, 0.0, 0.0],
            target: [0.0, 0.0, -0.4],
            effort_level: 0.2,
        }
    }

    fn report(kind: ScenarioKind, horizon: usize) -> ScaleReport {
        reward_scale_report(&RewardWeights::default(), &scenario(kind, horizon), &GameConfig::default()).unwrap()
    }

    #[test]
    fn best_case_has_no_distance_penalty() {
        let r = report(ScenarioKind::BestCase, 200);
        assert!(r.rows.iter().all(|row| row.distance_term == 0.0 && row.cum_distance == 0.0));
        // One hit per 1 s lifespan at 20 Hz.
        assert_eq!(r.final_row().cum_score, 10.0 * 10.0);
    }

    #[test]
    fn worst_case_distance_arithmetic() {
        let r = report(ScenarioKind::WorstCase, 20);
        assert!((r.final_row().cum_distance + 8.0).abs() < 1e-12);
        assert_eq!(r.final_row().cum_score, 0.0);
        assert!((r.final_row().cum_effort + 20.0 * 0.1 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn quadratic_path_costs_more_than_linear() {
        let lin = report(ScenarioKind::LinearInterp, 40);
        let quad = report(ScenarioKind::QuadraticInterp, 40);
        assert_eq!(lin.final_row().distance, 0.0);
        assert_eq!(quad.final_row().distance, 0.0);
        assert!((lin.rows[0].distance - 0.4 * 39.0 / 40.0).abs() < 1e-12);
        // Direct sum of the path distances.
        let oracle = |g: fn(f64) -> f64| -> f64 { (1..=40).map(|k| 0.4 * (1.0 - g(k as f64 / 40.0))).sum() };
        assert!((lin.final_row().cum_distance + oracle(|f| f)).abs() < 1e-12);
        assert!((quad.final_row().cum_distance + oracle(|f| f * f)).abs() < 1e-12);
        assert!(quad.final_row().cum_distance < lin.final_row().cum_distance);
    }

    #[test]
    fn components_sum_to_total_every_step() {
        for kind in [ScenarioKind::WorstCase, ScenarioKind::BestCase, ScenarioKind::LinearInterp, ScenarioKind::QuadraticInterp] {
            for row in report(kind, 73).rows {
                assert!((row.score + row.contact + row.distance_term + row.effort - row.total).abs() < 1e-12);
                let cum = row.cum_score + row.cum_contact + row.cum_distance + row.cum_effort;
                assert!((cum - row.cum_total).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dominance_ratios() {
        let r = report(ScenarioKind::WorstCase, 20);
        let last = r.final_row();
        let d = last.dom_distance.unwrap();
        assert!((d - 8.0 / 8.4).abs() < 1e-12);
        assert_eq!(last.dom_score, Some(0.0));
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut s = scenario(ScenarioKind::WorstCase, 0);
        assert!(reward_scale_report(&RewardWeights::default(), &s, &GameConfig::default()).is_err());
        s.horizon = 5;
        s.dt = 0.0;
        assert!(reward_scale_report(&RewardWeights::default(), &s, &GameConfig::default()).is_err());
        assert_eq!("best-case".parse::<ScenarioKind>().unwrap(), ScenarioKind::BestCase);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = report(ScenarioKind::LinearInterp, 3).to_csv().unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("step,time,distance,score"));
    }
}
