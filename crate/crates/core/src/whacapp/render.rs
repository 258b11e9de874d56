//! Flat-shaded RGB-D rendering from the headset's point of view.
//!
//! Every pixel casts one ray through its centre. Layers are painted in a
//! fixed order (target area, targets, hammer head); a later layer overwrites
//! an earlier one wherever its ray hits, whatever the depth. Depth is the
//! camera-space distance along the optical axis, `+inf` on the background.

use nalgebra::{UnitQuaternion, Vector3};

use super::config::PlacementFrame;
use super::game::Target;
use crate::bridge::{Pose, RgbdImage};

pub const PLANE_RGB: [u8; 3] = [110, 110, 110];
pub const HAMMER_RGB: [u8; 3] = [0, 0, 255];

/// Green at birth, red at end of life; channel values are `round(255·s)`.
pub fn target_rgb(age: f64, lifespan: f64) -> [u8; 3] {
    let s = (age / lifespan).clamp(0.0, 1.0);
    [(255.0 * s).round() as u8, (255.0 * (1.0 - s)).round() as u8, 0]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub width: u16,
    pub height: u16,
    pub vertical_fov_deg: f64,
}

impl Camera {
    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.vertical_fov_deg.to_radians()).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (0.5 * self.width as f64, 0.5 * self.height as f64)
    }

    /// Camera-frame ray through the centre of pixel `(x, y)`, with unit depth.
    pub fn ray(&self, x: usize, y: usize) -> Vector3<f64> {
        let f = self.focal();
        let (cx, cy) = self.principal_point();
        Vector3::new((x as f64 + 0.5 - cx) / f, -(y as f64 + 0.5 - cy) / f, -1.0)
    }

    /// Pixel coordinates of a camera-frame point in front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z >= 0.0 {
            return None;
        }
        let f = self.focal();
        let (cx, cy) = self.principal_point();
        Some((cx + f * p.x / -p.z, cy - f * p.y / -p.z))
    }
}

/// Everything the renderer reads, so rendering is a pure function of it.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub frame: &'a PlacementFrame,
    pub area_half_extent: f64,
    pub targets: &'a [Target],
    pub target_radius: f64,
    pub lifespan: f64,
    pub hammer_tip: Option<Vector3<f64>>,
    pub hammer_radius: f64,
}

fn plane_hit(origin: &Vector3<f64>, dir: &Vector3<f64>, point: &Vector3<f64>, normal: &Vector3<f64>) -> Option<f64> {
    let denom = normal.dot(dir);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = normal.dot(&(point - origin)) / denom;
    (t > 0.0).then_some(t)
}

fn sphere_hit(origin: &Vector3<f64>, dir: &Vector3<f64>, centre: &Vector3<f64>, r: f64) -> Option<f64> {
    let oc = origin - centre;
    let a = dir.norm_squared();
    let b = oc.dot(dir);
    let c = oc.norm_squared() - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    [(-b - sq) / a, (-b + sq) / a].into_iter().find(|t| *t > 0.0)
}

pub fn render_rgbd(camera: &Camera, hmd: &Pose, scene: &Scene) -> RgbdImage {
    let mut img = RgbdImage::new(camera.width, camera.height);
    let rot: UnitQuaternion<f64> = hmd.rotation();
    let origin = hmd.position;
    let frame = scene.frame;
    let (centre, normal, lateral, up) = (frame.center(), frame.normal(), frame.lateral(), frame.up());
    let colours: Vec<[u8; 3]> = scene.targets.iter().map(|t| target_rgb(t.age, scene.lifespan)).collect();
    let w = camera.width as usize;
    for y in 0..camera.height as usize {
        for x in 0..w {
            let dir = rot * camera.ray(x, y);
            let mut hit: Option<([u8; 3], f64)> = None;
            if let Some(t) = plane_hit(&origin, &dir, &centre, &normal) {
                let rel = origin + dir * t - centre;
                if rel.dot(&lateral).abs() <= scene.area_half_extent && rel.dot(&up).abs() <= scene.area_half_extent {
                    hit = Some((PLANE_RGB, t));
                }
            }
            for (target, colour) in scene.targets.iter().zip(&colours) {
                if let Some(t) = plane_hit(&origin, &dir, &target.position, &normal) {
                    if (origin + dir * t - target.position).norm() <= scene.target_radius {
                        hit = Some((*colour, t));
                    }
                }
            }
            if let Some(tip) = scene.hammer_tip {
                if let Some(t) = sphere_hit(&origin, &dir, &tip, scene.hammer_radius) {
                    hit = Some((HAMMER_RGB, t));
                }
            }
            if let Some((rgb, t)) = hit {
                let i = y * w + x;
                img.rgb[3 * i..3 * i + 3].copy_from_slice(&rgb);
                // Rays have unit camera-space depth, so t is the depth.
                img.depth[i] = t as f32;
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::whacapp::game::TargetState;

    const CAM: Camera = Camera {
        width: 120,
        height: 80,
        vertical_fov_deg: 90.0,
    };

    fn facing_frame(z: f64) -> PlacementFrame {
        PlacementFrame {
            offset: [0.0, 0.0, z],
            tilt_deg: 0.0,
            hit_axis: [0.0, 0.0, -1.0],
        }
    }

    fn target(p: Vector3<f64>, age: f64) -> Target {
        Target {
            id: 0,
            cell: (1, 1),
            position: p,
            age,
            state: TargetState::Active,
        }
    }

    #[test]
    fn midpoint_colour() {
        assert_eq!(target_rgb(0.5, 1.0), [128, 128, 0]);
        assert_eq!(target_rgb(0.0, 1.0), [0, 255, 0]);
        assert_eq!(target_rgb(1.0, 1.0), [255, 0, 0]);
    }

    #[test]
    fn focal_length_for_ninety_degrees() {
        assert!((CAM.focal() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn fresh_target_on_axis() {
        let frame = facing_frame(-0.4);
        let targets = [target(Vector3::new(0.0, 0.0, -0.4), 0.0)];
        let scene = Scene {
            frame: &frame,
            area_half_extent: 0.2,
            targets: &targets,
            target_radius: 0.025,
            lifespan: 1.0,
            hammer_tip: None,
            hammer_radius: 0.03,
        };
        let img = render_rgbd(&CAM, &Pose::identity(), &scene);
        assert_eq!(img.rgb_at(60, 40), [0, 255, 0]);
        assert!((img.depth_at(60, 40) - 0.4).abs() < 1e-6);
        // Oracle: projected radius f·r/z = 2.5 px around (60, 40).
        let (u, v) = CAM.project(&Vector3::new(0.0, 0.0, -0.4)).unwrap();
        assert_eq!((u, v), (60.0, 40.0));
        let radius_px = CAM.focal() * 0.025 / 0.4;
        let mut green = 0usize;
        for y in 0..80 {
            for x in 0..120 {
                let d = ((x as f64 + 0.5 - u).powi(2) + (y as f64 + 0.5 - v).powi(2)).sqrt();
                let is_green = img.rgb_at(x, y) == [0, 255, 0];
                if d < radius_px - 0.3 {
                    assert!(is_green, "({x},{y}) inside disc");
                } else if d > radius_px + 0.3 {
                    assert!(!is_green, "({x},{y}) outside disc");
                }
                green += is_green as usize;
            }
        }
        assert!(green > 12 && green < 28, "{green}");
    }

    #[test]
    fn empty_scene_shows_only_plane() {
        let frame = PlacementFrame::preset(crate::whacapp::config::Placement::Mid);
        let scene = Scene {
            frame: &frame,
            area_half_extent: 0.2,
            targets: &[],
            target_radius: 0.025,
            lifespan: 1.0,
            hammer_tip: Some(Vector3::new(0.0, 0.0, 0.5)),
            hammer_radius: 0.03,
        };
        let img = render_rgbd(&CAM, &Pose::identity(), &scene);
        let mut plane = 0;
        for px in img.rgb.chunks(3) {
            assert!(px == PLANE_RGB || px == [0, 0, 0]);
            plane += (px == PLANE_RGB) as usize;
        }
        assert!(plane > 0);
    }

    #[test]
    fn hammer_drawn_over_target() {
        let frame = facing_frame(-0.4);
        let targets = [target(Vector3::new(0.0, 0.0, -0.4), 0.0)];
        let scene = Scene {
            frame: &frame,
            area_half_extent: 0.2,
            targets: &targets,
            target_radius: 0.025,
            lifespan: 1.0,
            hammer_tip: Some(Vector3::new(0.0, 0.0, -0.3)),
            hammer_radius: 0.03,
        };
        let img = render_rgbd(&CAM, &Pose::identity(), &scene);
        assert_eq!(img.rgb_at(60, 40), HAMMER_RGB);
        assert!((img.depth_at(60, 40) - 0.27).abs() < 1e-3);
    }
}
