use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::SceneError;

pub type Vec3 = Vector3<f64>;

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Open-interior overlap test; touching faces do not count.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Vec3::repeat(margin);
        Aabb::new(self.min - m, self.max + m)
    }

    /// Slab intersection. Returns the parametric interval `[t_near, t_far]`
    /// of the line `origin + t * dir` inside the box, if non-empty.
    pub fn slab(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a] == 0.0 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let ta = (self.min[a] - origin[a]) / dir[a];
            let tb = (self.max[a] - origin[a]) / dir[a];
            let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
            if lo > t0 {
                t0 = lo;
            }
            if hi < t1 {
                t1 = hi;
            }
        }
        (t0 <= t1).then_some((t0, t1))
    }
}

/// Rigid transform from camera/body frame to world frame.
///
/// The body frame is x forward, y left, z up; the camera looks along +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, SceneError> {
        let err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if err >= 1e-9 || rotation.determinant() <= 0.0 {
            return Err(SceneError::InvalidPose(format!(
                "rotation is not a proper rotation (orthogonality error {err:e})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Level camera at `position` looking along heading `yaw`.
    pub fn from_yaw(position: Vec3, yaw: f64) -> Self {
        Self::from_yaw_pitch(position, yaw, 0.0)
    }

    /// Positive pitch tilts the optical axis downwards.
    pub fn from_yaw_pitch(position: Vec3, yaw: f64, pitch: f64) -> Self {
        let rot = Rotation3::from_euler_angles(0.0, pitch, yaw);
        Self {
            rotation: *rot.matrix(),
            translation: position,
        }
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(0).into_owned()
    }

    pub fn transform_dir(&self, d: &Vec3) -> Vec3 {
        self.rotation * d
    }
}

/// Pinhole camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians.
    pub hfov: f64,
}

impl CameraIntrinsics {
    pub fn new(width: usize, height: usize, hfov: f64) -> Result<Self, SceneError> {
        if width == 0 || height == 0 {
            return Err(SceneError::InvalidIntrinsics("image has zero size".into()));
        }
        if !(hfov > 0.0 && hfov < std::f64::consts::PI) {
            return Err(SceneError::InvalidIntrinsics(format!(
                "field of view {hfov} outside (0, pi)"
            )));
        }
        Ok(Self {
            width,
            height,
            hfov,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Focal length in pixels.
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.hfov).tan()
    }

    /// Unit ray direction in the camera frame through the center of pixel
    /// (`col`, `row`). Row 0 is the top of the image.
    pub fn ray_camera(&self, col: usize, row: usize) -> Vec3 {
        let f = self.focal();
        let u = col as f64 + 0.5 - 0.5 * self.width as f64;
        let v = row as f64 + 0.5 - 0.5 * self.height as f64;
        Vec3::new(f, -u, -v).normalize()
    }

    /// World-frame unit ray direction for pixel index `i` (row-major).
    pub fn ray_world(&self, pose: &Pose, i: usize) -> Vec3 {
        pose.transform_dir(&self.ray_camera(i % self.width, i / self.width))
    }
}

/// A camera position and heading, the planner's notion of a viewpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewPoint {
    pub position: Vec3,
    pub yaw: f64,
}

impl ViewPoint {
    pub fn pose(&self) -> Pose {
        Pose::from_yaw(self.position, self.yaw)
    }
}
