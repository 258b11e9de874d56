use nalgebra::{Matrix3, Vector3};

use super::kinematics::{chain, mass_points, point_jacobian, ChainFrames};
use super::model::{ArmModel, ACTUATORS, DOF};
use super::ArmError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmState {
    pub q: [f64; DOF],
    pub qdot: [f64; DOF],
    /// Mean joint acceleration over the last control step.
    pub qddot: [f64; DOF],
    /// Agonist/antagonist pairs per joint: `[2j]` drives `q[j]` up, `[2j+1]` down.
    pub activations: [f64; ACTUATORS],
}

impl ArmState {
    pub fn rest() -> Self {
        Self {
            q: [0.0; DOF],
            qdot: [0.0; DOF],
            qddot: [0.0; DOF],
            activations: [0.0; ACTUATORS],
        }
    }

    pub fn at(q: [f64; DOF]) -> Self {
        Self { q, ..Self::rest() }
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(&self.qdot)
            .chain(&self.qddot)
            .chain(&self.activations)
            .all(|v| v.is_finite())
    }
}

fn v3(a: &[f64; DOF]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn arr(v: &Vector3<f64>) -> [f64; DOF] {
    [v.x, v.y, v.z]
}

/// Joint-space mass matrix of the two point masses plus armature.
pub fn mass_matrix(model: &ArmModel, c: &ChainFrames) -> Matrix3<f64> {
    let mut m = Matrix3::from_diagonal(&v3(&model.armature));
    for p in mass_points(model, c) {
        let j = point_jacobian(c, &p.position, p.segment);
        m += p.mass * j.transpose() * j;
    }
    m
}

/// Generalized gravity force (joint torques exerted by gravity).
pub fn gravity_torque(model: &ArmModel, c: &ChainFrames) -> Vector3<f64> {
    let g = Vector3::new(0.0, -model.gravity, 0.0);
    mass_points(model, c)
        .iter()
        .map(|p| point_jacobian(c, &p.position, p.segment).transpose() * (p.mass * g))
        .sum()
}

/// Velocity-product terms `Σ m Jᵀ (J̇ q̇)`. `J̇ q̇` is the directional
/// derivative of `J(q) q̇` along `q̇`, taken by central differences.
pub fn velocity_product(model: &ArmModel, q: &[f64; DOF], qdot: &[f64; DOF]) -> Vector3<f64> {
    let qd = v3(qdot);
    let speed = qd.norm();
    if speed == 0.0 {
        return Vector3::zeros();
    }
    let eps = 1e-5 / speed;
    let shifted = |s: f64| {
        let qs = arr(&(v3(q) + qd * s));
        let c = chain(model, &qs);
        mass_points(model, &c).map(|p| point_jacobian(&c, &p.position, p.segment) * qd)
    };
    let plus = shifted(eps);
    let minus = shifted(-eps);
    let c = chain(model, q);
    mass_points(model, &c)
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let jdot_qdot = (plus[i] - minus[i]) / (2.0 * eps);
            point_jacobian(&c, &p.position, p.segment).transpose() * (p.mass * jdot_qdot)
        })
        .sum()
}

/// Joint accelerations for the given joint torques.
pub fn joint_acceleration(
    model: &ArmModel,
    q: &[f64; DOF],
    qdot: &[f64; DOF],
    torque: &Vector3<f64>,
) -> Result<Vector3<f64>, ArmError> {
    let c = chain(model, q);
    let m = mass_matrix(model, &c);
    let rhs = torque + gravity_torque(model, &c) - velocity_product(model, q, qdot);
    m.cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or(ArmError::SimulationDiverged("mass matrix not positive definite".into()))
}

/// Kinetic plus gravitational potential energy (zero potential at the shoulder height).
pub fn total_energy(model: &ArmModel, state: &ArmState) -> f64 {
    let c = chain(model, &state.q);
    let qd = v3(&state.qdot);
    let kinetic = 0.5 * qd.dot(&(mass_matrix(model, &c) * qd));
    let potential: f64 = mass_points(model, &c)
        .iter()
        .map(|p| p.mass * model.gravity * (p.position.y - c.shoulder.y))
        .sum();
    kinetic + potential
}

/// Net actuator torque minus viscous damping.
pub fn joint_torque(model: &ArmModel, activations: &[f64; ACTUATORS], qdot: &[f64; DOF]) -> Vector3<f64> {
    Vector3::from_fn(|j, _| {
        model.max_torque[j] * (activations[2 * j] - activations[2 * j + 1]) - model.damping[j] * qdot[j]
    })
}

/// Advance one control step of length `dt` with constant controls.
pub fn step_dynamics(
    model: &ArmModel,
    state: &ArmState,
    controls: &[f64; ACTUATORS],
    dt: f64,
) -> Result<ArmState, ArmError> {
    step_dynamics_with(model, state, controls, dt, |_, _| {})
}

/// [`step_dynamics`] with a callback after every physics substep, receiving
/// the intermediate state and the substep length.
pub fn step_dynamics_with<F: FnMut(&ArmState, f64)>(
    model: &ArmModel,
    state: &ArmState,
    controls: &[f64; ACTUATORS],
    dt: f64,
    mut on_substep: F,
) -> Result<ArmState, ArmError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ArmError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if let Some(u) = controls.iter().find(|u| !(0.0..=1.0).contains(*u)) {
        return Err(ArmError::InvalidInput(format!("control {u} outside [0,1]")));
    }
    let h = dt / model.substeps as f64;
    // Exact discretization of da/dt = (u − a)/τ over one substep.
    let blend = 1.0 - (-h / model.activation_time_constant).exp();
    let mut s = *state;
    let qdot_start = s.qdot;
    for _ in 0..model.substeps {
        for (a, u) in s.activations.iter_mut().zip(controls) {
            *a = (*a + (u - *a) * blend).clamp(0.0, 1.0);
        }
        let tau = joint_torque(model, &s.activations, &s.qdot);
        let acc = joint_acceleration(model, &s.q, &s.qdot, &tau)?;
        for j in 0..DOF {
            s.qdot[j] += h * acc[j];
            s.q[j] += h * s.qdot[j];
            if s.q[j] <= model.joint_lower[j] {
                s.q[j] = model.joint_lower[j];
                s.qdot[j] = s.qdot[j].max(0.0);
            } else if s.q[j] >= model.joint_upper[j] {
                s.q[j] = model.joint_upper[j];
                s.qdot[j] = s.qdot[j].min(0.0);
            }
        }
        if !s.is_finite() {
            return Err(ArmError::SimulationDiverged(format!("non-finite state {s:?}")));
        }
        on_substep(&s, h);
    }
    for j in 0..DOF {
        s.qddot[j] = (s.qdot[j] - qdot_start[j]) / dt;
    }
    Ok(s)
}
