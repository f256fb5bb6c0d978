//! Ground-truth world: procedural box scenes and an exact ray-cast sensor.

mod generate;
mod geometry;
pub mod io;

pub use generate::{generate_scene, SceneSpec};
pub use geometry::{Aabb, CameraIntrinsics, Pose, Vec3, ViewPoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

/// Category reserved for walls, floor and ceiling.
pub const STRUCTURE: u16 = 0;

/// Height of the planning plane above the floor, in meters.
pub const Z_PLAN: f64 = 1.5;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("could not place object {index} without overlap after {attempts} attempts")]
    PlacementFailure { index: usize, attempts: usize },
    #[error("camera at {0:?} is inside a solid primitive")]
    InsideSolid([f64; 3]),
    #[error("camera at {0:?} is outside the scene bounds")]
    OutOfBounds([f64; 3]),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// A solid axis-aligned box with a flat color and a semantic category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub bounds: Aabb,
    pub color: [f64; 3],
    pub category: u16,
    /// 0 for structure, a unique positive id for objects.
    pub instance: u32,
}

impl Primitive {
    pub fn is_object(&self) -> bool {
        self.category != STRUCTURE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub bounds: Aabb,
    pub num_categories: usize,
    pub z_plan: f64,
    pub primitives: Vec<Primitive>,
    /// Room interiors, in generation order.
    pub rooms: Vec<Aabb>,
    pub doorways: Vec<Aabb>,
    /// Held-out evaluation views, four per room.
    pub held_out: Vec<ViewPoint>,
}

/// Nearest surface along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub color: [f64; 3],
    pub category: u16,
    pub instance: u32,
}

impl Scene {
    pub fn objects(&self) -> impl Iterator<Item = &Primitive> {
        self.primitives.iter().filter(|p| p.is_object())
    }

    /// Nearest intersection with `distance > 0`. Primitives containing the
    /// origin are ignored.
    pub fn raycast(&self, origin: &Vec3, dir: &Vec3) -> Option<Hit> {
        debug_assert!((dir.norm() - 1.0).abs() < 1e-9, "direction must be unit");
        let mut best: Option<(f64, &Primitive)> = None;
        for prim in &self.primitives {
            if let Some((t0, _)) = prim.bounds.slab(origin, dir) {
                if t0 > 0.0 && best.is_none_or(|(b, _)| t0 < b) {
                    best = Some((t0, prim));
                }
            }
        }
        best.map(|(distance, p)| Hit {
            distance,
            color: p.color,
            category: p.category,
            instance: p.instance,
        })
    }

    /// Closed containment in any primitive.
    pub fn is_inside_solid(&self, p: &Vec3) -> bool {
        self.primitives.iter().any(|prim| prim.bounds.contains(p))
    }

    /// Index of the room whose interior contains `p`.
    pub fn room_of(&self, p: &Vec3) -> Option<usize> {
        self.rooms.iter().position(|r| r.contains(p))
    }

    /// Renders the true RGB, range and category images from `pose`.
    pub fn render_ground_truth(
        &self,
        pose: &Pose,
        intrinsics: &CameraIntrinsics,
    ) -> Result<Observation, SceneError> {
        let t = pose.translation;
        if !self.bounds.contains(&t) {
            return Err(SceneError::OutOfBounds([t.x, t.y, t.z]));
        }
        if self.is_inside_solid(&t) {
            return Err(SceneError::InsideSolid([t.x, t.y, t.z]));
        }
        let pixels = par::map(intrinsics.pixel_count(), |i| {
            let dir = intrinsics.ray_world(pose, i);
            self.raycast(&t, &dir)
        });
        let mut rgb = Vec::with_capacity(pixels.len());
        let mut depth = Vec::with_capacity(pixels.len());
        let mut category = Vec::with_capacity(pixels.len());
        for hit in pixels {
            match hit {
                Some(h) => {
                    rgb.push(h.color);
                    depth.push(h.distance);
                    category.push(h.category);
                }
                None => {
                    rgb.push([0.0; 3]);
                    depth.push(f64::INFINITY);
                    category.push(STRUCTURE);
                }
            }
        }
        Ok(Observation {
            pose: *pose,
            intrinsics: *intrinsics,
            rgb,
            depth,
            category,
        })
    }
}

/// Per-pixel RGB, range (meters along the ray, `+inf` for no hit) and
/// category images, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub category: Vec<u16>,
}

impl Observation {
    pub fn pixel_count(&self) -> usize {
        self.depth.len()
    }

    pub fn ray_dir(&self, i: usize) -> Vec3 {
        self.intrinsics.ray_world(&self.pose, i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall_scene() -> Scene {
        Scene {
            seed: 0,
            bounds: Aabb::new(Vec3::new(-1.0, -5.0, -5.0), Vec3::new(6.0, 5.0, 5.0)),
            num_categories: 8,
            z_plan: Z_PLAN,
            primitives: vec![Primitive {
                bounds: Aabb::new(Vec3::new(5.0, -5.0, -5.0), Vec3::new(6.0, 5.0, 5.0)),
                color: [0.2, 0.4, 0.6],
                category: 3,
                instance: 1,
            }],
            rooms: vec![],
            doorways: vec![],
            held_out: vec![],
        }
    }

    #[test]
    fn axis_ray_hits_face() {
        let s = wall_scene();
        let h = s.raycast(&Vec3::zeros(), &Vec3::x()).unwrap();
        assert_eq!(h.distance, 5.0);
        assert_eq!(h.category, 3);
        assert!(s.raycast(&Vec3::zeros(), &-Vec3::x()).is_none());
    }

    #[test]
    fn wall_depth_follows_cosine() {
        let s = wall_scene();
        let k = CameraIntrinsics::new(8, 6, 1.2).unwrap();
        let pose = Pose::from_yaw(Vec3::zeros(), 0.0);
        let obs = s.render_ground_truth(&pose, &k).unwrap();
        for i in 0..k.pixel_count() {
            let d = k.ray_camera(i % k.width, i / k.width);
            let expected = 5.0 / d.x;
            assert!((obs.depth[i] - expected).abs() < 1e-12);
            assert_eq!(obs.category[i], 3);
        }
    }

    #[test]
    fn one_pixel_render_is_axis_raycast() {
        let s = wall_scene();
        let k = CameraIntrinsics::new(1, 1, 0.9).unwrap();
        let pose = Pose::from_yaw(Vec3::new(0.0, 0.3, 0.1), 0.2);
        let obs = s.render_ground_truth(&pose, &k).unwrap();
        let h = s.raycast(&pose.translation, &pose.forward()).unwrap();
        assert_eq!(obs.depth[0], h.distance);
        assert_eq!(obs.rgb[0], h.color);
    }

    #[test]
    fn camera_inside_solid_is_rejected() {
        let s = wall_scene();
        let k = CameraIntrinsics::new(2, 2, 1.0).unwrap();
        let pose = Pose::from_yaw(Vec3::new(5.5, 0.0, 0.0), 0.0);
        assert!(matches!(
            s.render_ground_truth(&pose, &k),
            Err(SceneError::InsideSolid(_))
        ));
    }

    #[test]
    fn open_rays_get_sentinel_depth() {
        let s = wall_scene();
        let k = CameraIntrinsics::new(2, 2, 1.0).unwrap();
        let pose = Pose::from_yaw(Vec3::zeros(), std::f64::consts::PI);
        let obs = s.render_ground_truth(&pose, &k).unwrap();
        assert!(obs.depth.iter().all(|d| d.is_infinite()));
    }
}
