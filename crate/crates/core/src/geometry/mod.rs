//! Rigid poses, pinhole cameras, and depth/point-cloud conversion.

pub mod camera;
pub mod cloud;
pub mod pose;

pub use camera::CameraIntrinsics;
pub use cloud::{depth_to_cloud, merge_views, relative_to_first, PointCloud, ViewFrame};
pub use pose::{axis_angle, is_rotation, orthonormalize, random_rotation, rotation_angle, rotation_distance, Pose};

use nalgebra::Vector3;

#[inline]
pub fn v3(p: [f64; 3]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

#[inline]
pub fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

#[inline]
pub fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    dist2(a, b).sqrt()
}

pub fn centroid(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    [c[0] / n, c[1] / n, c[2] / n]
}
