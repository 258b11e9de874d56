use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::fatigue::FatigueParams;
use super::ArmError;
use crate::bridge::{CoordinateMap, Pose};

pub const DOF: usize = 3;
pub const ACTUATORS: usize = 2 * DOF;

/// Joint order used everywhere: shoulder elevation, shoulder azimuth, elbow flexion.
pub const JOINT_NAMES: [&str; DOF] = ["shoulder_elevation", "shoulder_azimuth", "elbow_flexion"];

/// Pose as it appears in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub position: [f64; 3],
    /// w, x, y, z
    #[serde(default = "identity_quat")]
    pub orientation: [f64; 4],
}

fn identity_quat() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl PoseConfig {
    pub fn at(position: [f64; 3]) -> Self {
        Self {
            position,
            orientation: identity_quat(),
        }
    }

    pub fn to_pose(&self) -> Pose {
        let [w, x, y, z] = self.orientation;
        Pose::new(
            Vector3::from(self.position),
            UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)),
        )
    }
}

/// Model frame: origin at the eyes, x right, y up, z backwards (the user looks
/// along −z). At `q = 0` the arm hangs straight down. Positive elevation swings
/// the arm forward and up, positive azimuth swings it towards the left, and
/// positive elbow flexion bends the forearm forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmModel {
    pub upper_arm_length: f64,
    pub forearm_length: f64,
    pub upper_arm_mass: f64,
    /// Forearm segment, with the hand-held controller lumped in.
    pub forearm_mass: f64,
    pub joint_lower: [f64; DOF],
    pub joint_upper: [f64; DOF],
    pub max_torque: [f64; DOF],
    /// Viscous joint damping, N·m·s/rad.
    pub damping: [f64; DOF],
    /// Reflected rotor inertia per joint, kg·m². Keeps the mass matrix
    /// positive definite when the arm is aligned with the azimuth axis.
    pub armature: [f64; DOF],
    pub activation_time_constant: f64,
    pub gravity: f64,
    pub shoulder_origin: [f64; 3],
    /// Hammer head relative to the wrist (grip) frame.
    pub hammer_offset: PoseConfig,
    pub hmd_pose: PoseConfig,
    /// Physics substeps per control step.
    pub substeps: usize,
}

impl Default for ArmModel {
    fn default() -> Self {
        Self {
            upper_arm_length: 0.31,
            forearm_length: 0.27,
            upper_arm_mass: 2.0,
            forearm_mass: 1.6,
            joint_lower: [-0.6, -1.2, 0.0],
            joint_upper: [3.0, 1.4, 2.6],
            max_torque: [40.0, 25.0, 20.0],
            damping: [1.5, 1.5, 0.8],
            armature: [0.05, 0.05, 0.02],
            activation_time_constant: 0.04,
            gravity: 9.81,
            shoulder_origin: [0.17, -0.25, 0.08],
            hammer_offset: PoseConfig::at([0.0, -0.1, 0.0]),
            hmd_pose: PoseConfig::at([0.0, 0.0, 0.0]),
            substeps: 10,
        }
    }
}

impl ArmModel {
    pub fn validate(&self) -> Result<(), ArmError> {
        let bad = |m: &str| Err(ArmError::InvalidModel(m.to_string()));
        if !(self.upper_arm_length > 0.0 && self.forearm_length > 0.0) {
            return bad("segment lengths must be positive");
        }
        if !(self.upper_arm_mass >= 0.0 && self.forearm_mass >= 0.0) {
            return bad("segment masses must be non-negative");
        }
        for j in 0..DOF {
            if !(self.joint_lower[j] < self.joint_upper[j]) {
                return bad(&format!("joint {} lower limit not below upper", JOINT_NAMES[j]));
            }
            if !(self.armature[j] > 0.0) {
                return bad("armature must be positive");
            }
        }
        if !(self.activation_time_constant > 0.0) {
            return bad("activation time constant must be positive");
        }
        if self.substeps == 0 {
            return bad("substeps must be at least 1");
        }
        Ok(())
    }

    pub fn shoulder(&self) -> Vector3<f64> {
        Vector3::from(self.shoulder_origin)
    }

    pub fn hammer_offset_pose(&self) -> Pose {
        self.hammer_offset.to_pose()
    }

    pub fn hmd(&self) -> Pose {
        self.hmd_pose.to_pose()
    }

    pub fn hammer_offset_length(&self) -> f64 {
        Vector3::from(self.hammer_offset.position).norm()
    }

    /// Upper bound on the hammer tip's distance from the shoulder.
    pub fn max_reach(&self) -> f64 {
        self.upper_arm_length + self.forearm_length + self.hammer_offset_length()
    }

    pub fn clamp_q(&self, q: &mut [f64; DOF]) {
        for j in 0..DOF {
            q[j] = q[j].clamp(self.joint_lower[j], self.joint_upper[j]);
        }
    }
}

/// Everything an arm config file may contain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    pub model: ArmModel,
    pub fatigue: FatigueParams,
    /// Model frame → bridge frame.
    pub frame: CoordinateMap,
}

impl ArmConfig {
    pub fn from_toml(s: &str) -> Result<Self, ArmError> {
        let cfg: ArmConfig = toml::from_str(s).map_err(|e| ArmError::InvalidModel(e.to_string()))?;
        cfg.model.validate()?;
        if !cfg.frame.is_valid() {
            return Err(ArmError::InvalidModel("frame rotation is not a unit quaternion".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ArmError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| ArmError::InvalidModel(format!("{}: {e}", path.display())))?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("arm config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_is_valid() {
        ArmModel::default().validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ArmConfig::default();
        let back = ArmConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = ArmConfig::from_toml("[model]\nupper_arm_length = 0.35\n").unwrap();
        assert_eq!(cfg.model.upper_arm_length, 0.35);
        assert_eq!(cfg.model.forearm_length, ArmModel::default().forearm_length);
    }

    #[test]
    fn inverted_limits_rejected() {
        let mut m = ArmModel::default();
        m.joint_lower[2] = 3.0;
        assert!(m.validate().is_err());
    }
}
