use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{GeometryError, Pose3};

/// Pinhole intrinsics. Pixel `(u, v)` addresses column `u`, row `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with a horizontal field of view and the principal
    /// point at the image center.
    pub fn from_hfov(hfov_deg: f64, width: u32, height: u32) -> Self {
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics(format!("{self:?}")))
        }
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    /// Ray through pixel `(u, v)` in the camera frame, scaled to unit z-depth.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Lift a pixel with metric z-depth into the world frame.
pub fn unproject(
    pixel: (f64, f64),
    depth_m: Option<f64>,
    k: &CameraIntrinsics,
    pose: &Pose3,
) -> Result<Vector3<f64>, GeometryError> {
    let depth = match depth_m {
        Some(d) if d > 0.0 && d.is_finite() => d,
        _ => return Err(GeometryError::NoDepth),
    };
    if !k.contains(pixel.0, pixel.1) {
        return Err(GeometryError::OutOfImage(pixel.0, pixel.1));
    }
    Ok(pose.transform_point(&(k.ray(pixel.0, pixel.1) * depth)))
}

/// Project a world point into the image. Returns the pixel and its z-depth, or
/// `None` when the point is behind the camera.
pub fn project(point: &Vector3<f64>, k: &CameraIntrinsics, pose: &Pose3) -> Option<((f64, f64), f64)> {
    let local = pose.inverse().transform_point(point);
    if local.z <= 1e-9 {
        return None;
    }
    let u = k.fx * local.x / local.z + k.cx;
    let v = k.fy * local.y / local.z + k.cy;
    Some(((u, v), local.z))
}
