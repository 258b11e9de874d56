//! Reach envelope of the maximally extended arm and target reachability.
//!
//! With the elbow straight the hand (or hammer tip) lies on a sphere around
//! the shoulder; the shoulder limits carve a sector out of that sphere. A
//! target counts as reachable when it is no farther from the shoulder than
//! the shell and its direction falls inside the sampled sector.

use nalgebra::Vector3;
use serde::Serialize;

use super::ToolsError;
use crate::armsim::kinematics::extended_hand;
use crate::armsim::ArmModel;
use crate::bridge::CoordinateMap;
use crate::whacapp::{GameConfig, Placement, PlacementFrame};

/// Sampled full-extension positions in the application frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeCloud {
    pub points: Vec<Vector3<f64>>,
    /// Shoulder centre, application frame.
    pub shoulder: Vector3<f64>,
    /// Distance of every point from the shoulder.
    pub radius: f64,
    /// Samples per shoulder DOF.
    pub resolution: usize,
    /// Tip of the held hammer rather than the bare hand.
    pub with_hammer: bool,
    /// Angular grid steps `(elevation, azimuth)` in radians.
    pub spacing: (f64, f64),
}

/// Both variants of the envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachEnvelope {
    pub bare_hand: EnvelopeCloud,
    pub with_hammer: EnvelopeCloud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reach {
    Reachable,
    Unreachable,
    Boundary,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + step * i as f64 })
}

impl EnvelopeCloud {
    /// Grid-sample shoulder elevation and azimuth over their limits with the
    /// elbow at full extension.
    pub fn generate(
        model: &ArmModel,
        resolution: usize,
        map: &CoordinateMap,
        with_hammer: bool,
    ) -> Result<Self, ToolsError> {
        if resolution < 2 {
            return Err(ToolsError::Invalid(format!(
                "envelope resolution must be at least 2, got {resolution}"
            )));
        }
        let (lo, hi) = (model.joint_lower, model.joint_upper);
        let mut points = Vec::with_capacity(resolution * resolution);
        for e in linspace(lo[0], hi[0], resolution) {
            for a in linspace(lo[1], hi[1], resolution) {
                points.push(map.map_point(&extended_hand(model, e, a, with_hammer)));
            }
        }
        let shoulder = map.map_point(&model.shoulder());
        let radius = (points[0] - shoulder).norm();
        let n = (resolution - 1) as f64;
        Ok(Self {
            points,
            shoulder,
            radius,
            resolution,
            with_hammer,
            spacing: ((hi[0] - lo[0]) / n, (hi[1] - lo[1]) / n),
        })
    }

    /// Angular radius around each sample that the grid is taken to cover:
    /// half a grid diagonal.
    pub fn cell_angle(&self) -> f64 {
        0.5 * self.spacing.0.hypot(self.spacing.1)
    }

    /// Smallest angle between `dir` (unit) and any sampled direction.
    fn angular_gap(&self, dir: &Vector3<f64>) -> f64 {
        let best = self
            .points
            .iter()
            .map(|p| (p - self.shoulder).dot(dir) / self.radius)
            .fold(f64::NEG_INFINITY, f64::max);
        best.clamp(-1.0, 1.0).acos()
    }

    pub fn classify(&self, target: &Vector3<f64>, tolerance: f64) -> Reach {
        let offset = target - self.shoulder;
        let r = offset.norm();
        if (r - self.radius).abs() <= tolerance {
            return Reach::Boundary;
        }
        if r > self.radius {
            return Reach::Unreachable;
        }
        if r <= tolerance {
            return Reach::Reachable;
        }
        if self.angular_gap(&(offset / r)) <= self.cell_angle() + tolerance / r {
            Reach::Reachable
        } else {
            Reach::Unreachable
        }
    }

    /// Header plus one `x,y,z` row per point.
    pub fn to_csv(&self) -> Result<String, ToolsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "y", "z"])?;
        for p in &self.points {
            w.serialize((p.x, p.y, p.z))?;
        }
        super::finish_csv(w)
    }
}

pub fn reach_envelope(
    model: &ArmModel,
    resolution: usize,
    map: &CoordinateMap,
) -> Result<ReachEnvelope, ToolsError> {
    Ok(ReachEnvelope {
        bare_hand: EnvelopeCloud::generate(model, resolution, map, false)?,
        with_hammer: EnvelopeCloud::generate(model, resolution, map, true)?,
    })
}

pub fn check_targets(
    cloud: &EnvelopeCloud,
    targets: &[Vector3<f64>],
    tolerance: f64,
) -> Result<Vec<Reach>, ToolsError> {
    if cloud.points.is_empty() {
        return Err(ToolsError::Invalid("empty envelope cloud".into()));
    }
    Ok(targets.iter().map(|t| cloud.classify(t, tolerance)).collect())
}

/// A labelled Whac-A-Mole target position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetSite {
    pub placement: Placement,
    pub row: usize,
    pub col: usize,
    pub position: [f64; 3],
}

/// All 27 cell centres (9 cells in each preset placement).
pub fn whac_a_mole_targets(game: &GameConfig) -> Vec<TargetSite> {
    let mut out = Vec::with_capacity(27);
    for p in Placement::ALL {
        let frame = PlacementFrame::preset(p);
        for row in 0..3 {
            for col in 0..3 {
                let v = frame.cell_position(row, col, game.grid_spacing);
                out.push(TargetSite {
                    placement: p,
                    row,
                    col,
                    position: [v.x, v.y, v.z],
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::armsim::kinematics::forward_kinematics;
    use std::f64::consts::PI;

    fn default_cloud(res: usize) -> EnvelopeCloud {
        EnvelopeCloud::generate(&ArmModel::default(), res, &CoordinateMap::identity(), true).unwrap()
    }

    #[test]
    fn bare_hand_points_lie_on_shell() {
        let m = ArmModel::default();
        let env = reach_envelope(&m, 25, &CoordinateMap::identity()).unwrap();
        let l = m.upper_arm_length + m.forearm_length;
        for p in &env.bare_hand.points {
            assert!(((p - m.shoulder()).norm() - l).abs() < 1e-9);
        }
        let lh = l + m.hammer_offset_length();
        for p in &env.with_hammer.points {
            assert!(((p - m.shoulder()).norm() - lh).abs() < 1e-9);
        }
        assert_eq!(env.bare_hand.points.len(), 625);
    }

    #[test]
    fn mapped_cloud_keeps_radius() {
        let m = ArmModel::default();
        let map = CoordinateMap::new(
            nalgebra::UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
            Vector3::new(1.0, 2.0, -0.5),
            true,
        );
        let c = EnvelopeCloud::generate(&m, 12, &map, true).unwrap();
        for p in &c.points {
            assert!(((p - c.shoulder).norm() - m.max_reach()).abs() < 1e-9);
        }
    }

    #[test]
    fn resolution_below_two_rejected() {
        let m = ArmModel::default();
        assert!(EnvelopeCloud::generate(&m, 1, &CoordinateMap::identity(), false).is_err());
    }

    #[test]
    fn unlimited_shoulder_covers_sphere() {
        let mut m = ArmModel::default();
        m.joint_lower[0] = 0.0;
        m.joint_upper[0] = PI;
        m.joint_lower[1] = -PI;
        m.joint_upper[1] = PI;
        let c = EnvelopeCloud::generate(&m, 100, &CoordinateMap::identity(), false).unwrap();
        // Equal-area bins: uniform in cos(polar) and in longitude.
        let (nz, nphi) = (20usize, 40usize);
        let mut hit = vec![false; nz * nphi];
        for p in &c.points {
            let d = (p - c.shoulder) / c.radius;
            let iz = (((d.y + 1.0) / 2.0 * nz as f64) as usize).min(nz - 1);
            let phi = d.z.atan2(d.x) + PI;
            let ip = ((phi / (2.0 * PI) * nphi as f64) as usize).min(nphi - 1);
            hit[iz * nphi + ip] = true;
        }
        let covered = hit.iter().filter(|h| **h).count() as f64 / hit.len() as f64;
        assert!(covered > 0.99, "coverage {covered}");
    }

    #[test]
    fn coarse_grid_nested_in_fine_grid() {
        let coarse = default_cloud(10);
        let fine = default_cloud(91);
        for p in &coarse.points {
            let d = fine.points.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-9);
        }
    }

    #[test]
    fn trivial_targets() {
        let m = ArmModel::default();
        let c = default_cloud(30);
        let far = m.shoulder() + Vector3::new(0.0, 0.0, -(m.upper_arm_length + m.forearm_length + 1.0));
        let r = check_targets(&c, &[m.shoulder(), far], 0.01).unwrap();
        assert_eq!(r, vec![Reach::Reachable, Reach::Unreachable]);
        assert!(check_targets(&c, &[], 0.01).unwrap().is_empty());
        assert_eq!(c.classify(&c.points[17], 0.01), Reach::Boundary);
    }

    #[test]
    fn direction_outside_sector_is_unreachable() {
        let c = default_cloud(40);
        // Straight behind and above the shoulder: beyond both shoulder limits.
        let t = c.shoulder + Vector3::new(0.0, 0.3, 0.3);
        assert_eq!(c.classify(&t, 0.01), Reach::Unreachable);
    }

    #[test]
    fn all_whac_a_mole_targets_reachable_and_match_refined_oracle() {
        let res = 100;
        let c = default_cloud(res);
        let oracle = default_cloud(10 * (res - 1) + 1);
        let targets: Vec<Vector3<f64>> =
            whac_a_mole_targets(&GameConfig::default()).iter().map(|t| Vector3::from(t.position)).collect();
        assert_eq!(targets.len(), 27);
        let got = check_targets(&c, &targets, 0.01).unwrap();
        let want = check_targets(&oracle, &targets, 0.01).unwrap();
        let outside_band: Vec<_> = got.iter().zip(&want).filter(|(_, w)| **w != Reach::Boundary).collect();
        let agree = outside_band.iter().filter(|(g, w)| g == w).count();
        assert!(agree as f64 >= 0.99 * outside_band.len() as f64);
        assert!(got.iter().all(|r| *r == Reach::Reachable), "{got:?}");
    }

    #[test]
    fn targets_reachable_by_bent_arm_fk() {
        // Independent check with the elbow free: some joint configuration
        // within limits brings the hammer tip within 1 cm of every target.
        let m = ArmModel::default();
        let n = 60;
        let mut tips = Vec::with_capacity(n * n * n);
        for e in linspace(m.joint_lower[0], m.joint_upper[0], n) {
            for a in linspace(m.joint_lower[1], m.joint_upper[1], n) {
                for b in linspace(m.joint_lower[2], m.joint_upper[2], n) {
                    tips.push(forward_kinematics(&m, &[e, a, b]).1.position);
                }
            }
        }
        let dist = |q: &[f64; 3], p: &Vector3<f64>| (forward_kinematics(&m, q).1.position - p).norm();
        for t in whac_a_mole_targets(&GameConfig::default()) {
            let p = Vector3::from(t.position);
            let best = tips.iter().enumerate().map(|(i, q)| ((q - p).norm(), i)).fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
            // Refine the best grid sample by shrinking coordinate search.
            let grid = |k: usize, j: usize| linspace(m.joint_lower[k], m.joint_upper[k], n).nth(j).unwrap();
            let i = best.1;
            let mut q = [grid(0, i / (n * n)), grid(1, i / n % n), grid(2, i % n)];
            let mut step = 0.1;
            while step > 1e-6 {
                let mut improved = false;
                for k in 0..3 {
                    for s in [-step, step] {
                        let mut c = q;
                        c[k] = (c[k] + s).clamp(m.joint_lower[k], m.joint_upper[k]);
                        if dist(&c, &p) < dist(&q, &p) {
                            q = c;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            let d = dist(&q, &p);
            assert!(d < 1e-3, "{t:?} nearest {d} at {q:?}");
        }
    }
}
