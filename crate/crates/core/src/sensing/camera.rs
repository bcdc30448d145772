use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / dot(a, a).sqrt())
}

/// Body-fixed pinhole camera. Pitch is positive downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub vfov_deg: f64,
    pub mount_height: f64,
    pub pitch_deg: f64,
    /// Points closer than this along the optical axis are clipped.
    pub near: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            hfov_deg: 20.0,
            vfov_deg: 20.0,
            mount_height: 1.6,
            pitch_deg: 20.0,
            near: 0.05,
        }
    }
}

/// Camera center and axes in world coordinates for one agent pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFrame {
    pub origin: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub down: Vec3,
}

impl CameraModel {
    pub fn fx(&self) -> f64 {
        self.width as f64 / 2.0 / (self.hfov_deg.to_radians() / 2.0).tan()
    }

    pub fn fy(&self) -> f64 {
        self.height as f64 / 2.0 / (self.vfov_deg.to_radians() / 2.0).tan()
    }

    pub fn cx(&self) -> f64 {
        self.width as f64 / 2.0
    }

    pub fn cy(&self) -> f64 {
        self.height as f64 / 2.0
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn frame(&self, agent: &Pose) -> CameraFrame {
        let (st, ct) = agent.theta.sin_cos();
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        let forward = [ct * cp, st * cp, -sp];
        let right = [st, -ct, 0.0];
        CameraFrame {
            origin: [agent.x, agent.y, self.mount_height],
            forward,
            right,
            down: cross(forward, right),
        }
    }

    /// Unit ray through continuous image coordinates (pixel `i` spans `[i, i+1)`).
    pub fn ray(&self, frame: &CameraFrame, u: f64, v: f64) -> Vec3 {
        let a = (u - self.cx()) / self.fx();
        let b = (v - self.cy()) / self.fy();
        normalize(add(add(frame.forward, scale(frame.right, a)), scale(frame.down, b)))
    }

    /// Ray through the center of pixel (col, row).
    pub fn pixel_ray(&self, frame: &CameraFrame, col: usize, row: usize) -> Vec3 {
        self.ray(frame, col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Continuous image coordinates and optical-axis depth of a world point,
    /// or `None` in front of the near plane.
    pub fn project(&self, frame: &CameraFrame, q: Vec3) -> Option<(f64, f64, f64)> {
        let rel = sub(q, frame.origin);
        let z = dot(rel, frame.forward);
        if z < self.near {
            return None;
        }
        Some((
            self.cx() + self.fx() * dot(rel, frame.right) / z,
            self.cy() + self.fy() * dot(rel, frame.down) / z,
            z,
        ))
    }

    pub fn in_image(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.width == 0 || self.height == 0 {
            return Err("camera width and height must be >= 1".into());
        }
        for (name, fov) in [("hfov_deg", self.hfov_deg), ("vfov_deg", self.vfov_deg)] {
            if !(fov > 0.0 && fov < 180.0) {
                return Err(format!("{name} must be in (0, 180), got {fov}"));
            }
        }
        if !(self.mount_height > 0.0) {
            return Err("mount_height must be > 0".into());
        }
        if !(self.pitch_deg > -90.0 && self.pitch_deg < 90.0) {
            return Err("pitch_deg must be in (-90, 90)".into());
        }
        if !(self.near > 0.0) {
            return Err("near must be > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axes_are_orthonormal() {
        let cam = CameraModel::default();
        let f = cam.frame(&Pose::new(1.0, 2.0, 0.7));
        for (a, b) in [(f.forward, f.right), (f.forward, f.down), (f.right, f.down)] {
            assert!(dot(a, b).abs() < 1e-12);
        }
        assert!(f.down[2] < 0.0);
        // Heading 0: right is -y.
        let f0 = cam.frame(&Pose::new(0.0, 0.0, 0.0));
        assert!((f0.right[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pixel_ray_projects_back_to_pixel_center() {
        let cam = CameraModel::default();
        let f = cam.frame(&Pose::new(0.0, 0.0, 0.3));
        let d = cam.pixel_ray(&f, 17, 200);
        let q = add(f.origin, scale(d, 4.0));
        let (u, v, _) = cam.project(&f, q).unwrap();
        assert!((u - 17.5).abs() < 1e-9 && (v - 200.5).abs() < 1e-9);
    }

    #[test]
    fn focal_length_matches_fov() {
        let cam = CameraModel::default();
        assert!((cam.fx() - 128.0 / 10f64.to_radians().tan()).abs() < 1e-9);
    }
}
