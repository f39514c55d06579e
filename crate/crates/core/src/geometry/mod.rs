//! Rigid transforms, pinhole camera model, point clouds and box fitting.
//!
//! World frame is Z-up with the ground plane at z = 0.

mod camera;
mod cloud;
mod obb;
mod pose;

pub use camera::{project, unproject, CameraIntrinsics};
pub use cloud::{quantize, voxel_downsample, voxel_key, PointCloud3};
pub use obb::{convex_hull_2d, fit_oriented_box, OrientedBox3};
pub use pose::{compose, Pose3};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("no valid depth at pixel")]
    NoDepth,
    #[error("pixel ({0}, {1}) is outside the image")]
    OutOfImage(f64, f64),
    #[error("point cloud is degenerate (fewer than 4 points or collinear within 1 mm)")]
    DegenerateCloud,
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("point cloud blob truncated: expected {expected} bytes, got {got}")]
    TruncatedCloud { expected: usize, got: usize },
    #[error("point cloud blob contains a non-finite coordinate")]
    NonFinite,
}
