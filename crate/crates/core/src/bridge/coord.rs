use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::types::Pose;

/// Rigid map between an endpoint's native frame and the bridge frame
/// (right-handed, y up, meters): `p' = R·(H·p) + t`, where `H` mirrors x
/// when `flip_handedness` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinateMap {
    /// Unit quaternion, w,x,y,z.
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    #[serde(default)]
    pub flip_handedness: bool,
}

impl Default for CoordinateMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl CoordinateMap {
    pub fn identity() -> Self {
        Self {
            rotation: [1.0, 0.0, 0.0, 0.0],
            translation: [0.0; 3],
            flip_handedness: false,
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, flip_handedness: bool) -> Self {
        let q = rotation.quaternion();
        Self {
            rotation: [q.w, q.i, q.j, q.k],
            translation: [translation.x, translation.y, translation.z],
            flip_handedness,
        }
    }

    pub fn translation_only(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t, false)
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn is_valid(&self) -> bool {
        let [w, x, y, z] = self.rotation;
        let n = (w * w + x * x + y * y + z * z).sqrt();
        (n - 1.0).abs() < 1e-9 && self.translation.iter().all(|v| v.is_finite())
    }

    fn mirror_point(&self, p: Vector3<f64>) -> Vector3<f64> {
        if self.flip_handedness {
            Vector3::new(-p.x, p.y, p.z)
        } else {
            p
        }
    }

    /// Conjugation by the x-mirror keeps the frame a proper rotation.
    fn mirror_rotation(&self, q: Quaternion<f64>) -> Quaternion<f64> {
        if self.flip_handedness {
            Quaternion::new(q.w, q.i, -q.j, -q.k)
        } else {
            q
        }
    }

    pub fn map_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * self.mirror_point(*p) + self.translation()
    }

    pub fn map_pose(&self, p: &Pose) -> Pose {
        let r = self.rotation();
        Pose {
            position: self.map_point(&p.position),
            orientation: r.quaternion() * self.mirror_rotation(p.orientation),
        }
    }

    pub fn inverse(&self) -> CoordinateMap {
        let r_inv = self.rotation().inverse();
        let rot = UnitQuaternion::from_quaternion(self.mirror_rotation(r_inv.into_inner()));
        let t = -self.mirror_point(r_inv * self.translation());
        Self::new(rot, t, self.flip_handedness)
    }
}

/// Free-function form used by the bridge tests.
pub fn map_pose(map: &CoordinateMap, p: &Pose) -> Pose {
    map.map_pose(p)
}
