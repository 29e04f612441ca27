//! Core geometric types: rigid transforms, heightmaps, tactile images,
//! point clouds, and conversions between them.

mod cloud;
mod heightmap;
mod transform;

pub use cloud::{
    apply_transform, corresponded_rmse, nearest_neighbor_rmse, voxel_downsample, PointCloud,
};
pub use heightmap::{Heightmap, SensorIntrinsics, TactileImage};
pub use transform::{RigidTransform, ROTATION_TOL};

use nalgebra::Vector3;

use crate::{Error, Result};

/// Lifts a heightmap into a sensor-frame point cloud with normals.
///
/// Pixel (row r, col c) maps to x = c * pitch, y = r * pitch, z = -depth, so
/// deeper contact is further along -z. Only masked pixels produce points, in
/// row-major order. Normals come from central-difference depth gradients and
/// point out of the gel (positive z component).
pub fn heightmap_to_pointcloud(hm: &Heightmap, intrinsics: &SensorIntrinsics) -> Result<PointCloud> {
    intrinsics.validate()?;
    if hm.width() != intrinsics.width || hm.height() != intrinsics.height {
        return Err(Error::Usage(format!(
            "heightmap {}x{} does not match sensor {}x{}",
            hm.width(),
            hm.height(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    if (hm.pixel_pitch() - intrinsics.pixel_pitch).abs() > 1e-12 {
        return Err(Error::Usage(format!(
            "heightmap pitch {} does not match sensor pitch {}",
            hm.pixel_pitch(),
            intrinsics.pixel_pitch
        )));
    }
    let (gx, gy) = hm.gradients();
    let pitch = hm.pixel_pitch();
    let mut points = Vec::new();
    let mut normals = Vec::new();
    for r in 0..hm.height() {
        for c in 0..hm.width() {
            let i = hm.idx(r, c);
            if !hm.mask()[i] {
                continue;
            }
            let p = Vector3::new(c as f64 * pitch, r as f64 * pitch, -hm.depth(r, c));
            points.push(intrinsics.sensor_frame.apply(p));
            // Surface is z = -d(x, y); its upward normal is (dx, dy, 1).
            let n = Vector3::new(gx[i], gy[i], 1.0).normalize();
            normals.push(intrinsics.sensor_frame.rotate(n));
        }
    }
    PointCloud::with_normals(points, normals)
}
