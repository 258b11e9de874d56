use super::dynamics::{step_dynamics_with, ArmState};
use super::fatigue::{fatigue_step, target_load, FatigueState};
use super::kinematics::forward_kinematics;
use super::model::{ArmConfig, ArmModel, ACTUATORS, DOF};
use super::ArmError;
use crate::bridge::wire::{WireReader, WireWriter};
use crate::bridge::{CoordinateMap, DecodeError, Pose, StateUpdateMsg};

/// Extension key carrying the mean fatigued fraction in STATE_UPDATE.
pub const FATIGUE_KEY: &str = "fatigue";
/// Extension key carrying the neural effort of the last controls.
pub const EFFORT_KEY: &str = "neural_effort";

/// The simulated user. Owns the arm and its fatigue state; reports HMD
/// and controller poses in the bridge frame.
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    pub model: ArmModel,
    pub frame: CoordinateMap,
    pub state: ArmState,
    pub fatigue: FatigueState,
    pub dt: f64,
    step: u64,
    last_effort: f64,
}

impl SimulatedUser {
    pub fn new(config: &ArmConfig, dt: f64) -> Result<Self, ArmError> {
        config.model.validate()?;
        if !(dt > 0.0) {
            return Err(ArmError::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            model: config.model.clone(),
            frame: config.frame,
            state: ArmState::rest(),
            fatigue: FatigueState::rested(config.fatigue),
            dt,
            step: 0,
            last_effort: 0.0,
        })
    }

    pub fn reset(&mut self) {
        self.state = ArmState::rest();
        self.fatigue = FatigueState::rested(self.fatigue.params);
        self.step = 0;
        self.last_effort = 0.0;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// `k·dt` for step k, so long episodes never accumulate round-off.
    pub fn time_at(&self, step: u64) -> f64 {
        step as f64 * self.dt
    }

    /// Simulate `[t, t+dt)` under constant controls and report the resulting
    /// sensor poses for that window.
    pub fn step(&mut self, controls: &[f64; ACTUATORS]) -> Result<StateUpdateMsg, ArmError> {
        let mut fatigue = self.fatigue;
        let next = step_dynamics_with(&self.model, &self.state, controls, self.dt, |s, h| {
            fatigue = fatigue_step(&fatigue, &target_load(&s.activations), h);
        })?;
        self.state = next;
        self.fatigue = fatigue;
        self.last_effort = super::perception::neural_effort(controls);
        let msg = self.act(self.time_at(self.step), self.time_at(self.step + 1));
        self.step += 1;
        Ok(msg)
    }

    /// Virtual sensors: controller at the grip, HMD fixed to the head.
    pub fn act(&self, t_current: f64, t_next: f64) -> StateUpdateMsg {
        StateUpdateMsg {
            t_current,
            t_next,
            hmd: self.hmd_pose(),
            controllers: vec![self.controller_pose()],
            extras: vec![
                (FATIGUE_KEY.to_string(), self.fatigue.mean_fatigued()),
                (EFFORT_KEY.to_string(), self.last_effort),
            ],
        }
    }

    pub fn controller_pose(&self) -> Pose {
        let (wrist, _) = forward_kinematics(&self.model, &self.state.q);
        self.frame.map_pose(&wrist)
    }

    pub fn hmd_pose(&self) -> Pose {
        self.frame.map_pose(&self.model.hmd())
    }

    pub fn hammer_tip(&self) -> nalgebra::Vector3<f64> {
        let (_, tip) = forward_kinematics(&self.model, &self.state.q);
        self.frame.map_point(&tip.position)
    }

    /// Canonical little-endian snapshot of the dynamic state.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut w = WireWriter::with_capacity(512);
        w.put_u64(self.step);
        for v in self
            .state
            .q
            .iter()
            .chain(&self.state.qdot)
            .chain(&self.state.qddot)
            .chain(&self.state.activations)
            .chain(&self.fatigue.m_r)
            .chain(&self.fatigue.m_a)
            .chain(&self.fatigue.m_f)
        {
            w.put_f64(*v);
        }
        w.put_f64(self.last_effort);
        w.into_inner()
    }

    pub fn restore(&mut self, bytes: &[u8]) -> Result<(), DecodeError> {
        let mut r = WireReader::new(bytes);
        let step = r.get_u64()?;
        let mut read = |n: usize| -> Result<Vec<f64>, DecodeError> { (0..n).map(|_| r.get_f64()).collect() };
        let q = read(DOF)?;
        let qdot = read(DOF)?;
        let qddot = read(DOF)?;
        let act = read(ACTUATORS)?;
        let m_r = read(ACTUATORS)?;
        let m_a = read(ACTUATORS)?;
        let m_f = read(ACTUATORS)?;
        let effort = read(1)?[0];
        r.finish()?;
        self.step = step;
        self.state.q.copy_from_slice(&q);
        self.state.qdot.copy_from_slice(&qdot);
        self.state.qddot.copy_from_slice(&qddot);
        self.state.activations.copy_from_slice(&act);
        self.fatigue.m_r.copy_from_slice(&m_r);
        self.fatigue.m_a.copy_from_slice(&m_a);
        self.fatigue.m_f.copy_from_slice(&m_f);
        self.last_effort = effort;
        Ok(())
    }
}
