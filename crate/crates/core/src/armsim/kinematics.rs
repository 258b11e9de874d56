use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use super::model::{ArmModel, DOF};
use crate::bridge::Pose;

/// Intermediate frames of the serial chain for one configuration.
#[derive(Debug, Clone, Copy)]
pub struct ChainFrames {
    pub shoulder: Vector3<f64>,
    pub elbow: Vector3<f64>,
    pub wrist: Vector3<f64>,
    /// Upper-arm orientation (shoulder frame after elevation and azimuth).
    pub upper_rot: Rotation3<f64>,
    /// Forearm orientation (wrist frame).
    pub fore_rot: Rotation3<f64>,
    /// World-frame axis shared by shoulder elevation and elbow flexion.
    pub lateral_axis: Vector3<f64>,
}

const DOWN: Vector3<f64> = Vector3::new(0.0, -1.0, 0.0);

pub fn chain(model: &ArmModel, q: &[f64; DOF]) -> ChainFrames {
    let [elev, azim, elbow] = *q;
    let yaw = Rotation3::from_axis_angle(&Vector3::y_axis(), azim);
    let upper_rot = yaw * Rotation3::from_axis_angle(&Vector3::x_axis(), elev);
    let fore_rot = upper_rot * Rotation3::from_axis_angle(&Vector3::x_axis(), elbow);
    let shoulder = model.shoulder();
    let elbow_pos = shoulder + upper_rot * DOWN * model.upper_arm_length;
    let wrist = elbow_pos + fore_rot * DOWN * model.forearm_length;
    ChainFrames {
        shoulder,
        elbow: elbow_pos,
        wrist,
        upper_rot,
        fore_rot,
        lateral_axis: yaw * Vector3::x(),
    }
}

/// Wrist (grip) pose and hammer-tip pose in the model frame.
pub fn forward_kinematics(model: &ArmModel, q: &[f64; DOF]) -> (Pose, Pose) {
    let c = chain(model, q);
    let wrist = Pose::new(c.wrist, UnitQuaternion::from_rotation_matrix(&c.fore_rot));
    let tip = wrist.compose(&model.hammer_offset_pose());
    (wrist, tip)
}

/// Hand position at full elbow extension for the given shoulder angles.
pub fn extended_hand(model: &ArmModel, elevation: f64, azimuth: f64, with_hammer: bool) -> Vector3<f64> {
    let q = [elevation, azimuth, 0.0];
    let (wrist, tip) = forward_kinematics(model, &q);
    if with_hammer {
        tip.position
    } else {
        wrist.position
    }
}

/// Unit direction of the upper arm for shoulder angles (elbow straight).
pub fn arm_direction(elevation: f64, azimuth: f64) -> Vector3<f64> {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vector3::new(-se * sa, -ce, -se * ca)
}

/// Point masses used by the dynamics: upper-arm and forearm centres of mass.
#[derive(Debug, Clone, Copy)]
pub struct MassPoint {
    pub mass: f64,
    pub position: Vector3<f64>,
    /// Index of the segment: 0 upper arm, 1 forearm.
    pub segment: usize,
}

pub fn mass_points(model: &ArmModel, c: &ChainFrames) -> [MassPoint; 2] {
    [
        MassPoint {
            mass: model.upper_arm_mass,
            position: (c.shoulder + c.elbow) * 0.5,
            segment: 0,
        },
        MassPoint {
            mass: model.forearm_mass,
            position: (c.elbow + c.wrist) * 0.5,
            segment: 1,
        },
    ]
}

/// Translational Jacobian (3×DOF) of a point rigidly attached to `segment`.
pub fn point_jacobian(c: &ChainFrames, p: &Vector3<f64>, segment: usize) -> Matrix3<f64> {
    let from_shoulder = p - c.shoulder;
    let col_elev = c.lateral_axis.cross(&from_shoulder);
    let col_azim = Vector3::y().cross(&from_shoulder);
    let col_elbow = if segment >= 1 {
        c.lateral_axis.cross(&(p - c.elbow))
    } else {
        Vector3::zeros()
    };
    Matrix3::from_columns(&[col_elev, col_azim, col_elbow])
}

/// Jacobian of the hammer tip.
pub fn tip_jacobian(model: &ArmModel, q: &[f64; DOF]) -> Matrix3<f64> {
    let c = chain(model, q);
    let (_, tip) = forward_kinematics(model, q);
    point_jacobian(&c, &tip.position, 1)
}
