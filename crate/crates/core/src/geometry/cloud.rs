use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::{Error, Result};

/// 3D point cloud with optional per-point unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    normals: Option<Vec<Vector3<f64>>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::Usage(format!("non-finite point at index {i}")));
            }
        }
        Ok(Self {
            points,
            normals: None,
        })
    }

    pub fn with_normals(points: Vec<Vector3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::Usage(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            if !n.iter().all(|v| v.is_finite()) || (n.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Usage(format!(
                    "normal at index {i} is not unit length"
                )));
            }
        }
        let mut cloud = Self::new(points)?;
        cloud.normals = Some(normals);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn centroid(&self) -> Result<Vector3<f64>> {
        if self.points.is_empty() {
            return Err(Error::DegenerateGeometry(
                "centroid of an empty cloud".into(),
            ));
        }
        Ok(self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64)
    }

    /// Serializes as one point per line, `x y z` or `x y z nx ny nz`,
    /// six decimal places.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.points.len() * 32);
        for (i, p) in self.points.iter().enumerate() {
            let _ = write!(out, "{:.6} {:.6} {:.6}", p.x, p.y, p.z);
            if let Some(normals) = &self.normals {
                let n = normals[i];
                let _ = write!(out, " {:.6} {:.6} {:.6}", n.x, n.y, n.z);
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format written by [`PointCloud::to_text`]. Every line
    /// must carry 3 or 6 fields and all lines must agree on which.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut normals = Vec::new();
        let mut has_normals: Option<bool> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|f| {
                    f.parse::<f64>().map_err(|_| Error::Usage(format!(
                        "cloud text line {}: bad number {f:?}",
                        lineno + 1
                    )))
                })
                .collect::<Result<_>>()?;
            let with_n = match fields.len() {
                3 => false,
                6 => true,
                n => {
                    return Err(Error::Usage(format!(
                        "cloud text line {}: expected 3 or 6 fields, got {n}",
                        lineno + 1
                    )))
                }
            };
            if *has_normals.get_or_insert(with_n) != with_n {
                return Err(Error::Usage(format!(
                    "cloud text line {}: inconsistent field count",
                    lineno + 1
                )));
            }
            points.push(Vector3::new(fields[0], fields[1], fields[2]));
            if with_n {
                let n = Vector3::new(fields[3], fields[4], fields[5]);
                let norm = n.norm();
                if norm < 1e-12 {
                    return Err(Error::Usage(format!(
                        "cloud text line {}: zero normal",
                        lineno + 1
                    )));
                }
                normals.push(n / norm);
            }
        }
        if has_normals == Some(true) {
            Self::with_normals(points, normals)
        } else {
            Self::new(points)
        }
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load_text(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

/// Applies a rigid transform to every point (and rotates normals).
pub fn apply_transform(
    cloud: &PointCloud,
    transform: &crate::geometry::RigidTransform,
) -> PointCloud {
    let points = cloud.points().iter().map(|&p| transform.apply(p)).collect();
    let normals = cloud
        .normals()
        .map(|ns| ns.iter().map(|&n| transform.rotate(n)).collect());
    PointCloud {
        points,
        normals,
    }
}

/// RMSE between clouds with identical length and point order.
pub fn corresponded_rmse(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "corresponded clouds differ in size: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::UndefinedMetric("rmse of empty clouds".into()));
    }
    let sum: f64 = a
        .points()
        .iter()
        .zip(b.points())
        .map(|(p, q)| (p - q).norm_squared())
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Root mean square of each point's distance to its nearest neighbour in
/// `reference`. Brute force; intended for validation on moderate clouds.
pub fn nearest_neighbor_rmse(cloud: &PointCloud, reference: &PointCloud) -> Result<f64> {
    if cloud.is_empty() || reference.is_empty() {
        return Err(Error::UndefinedMetric(
            "nearest-neighbor rmse of empty clouds".into(),
        ));
    }
    let sum: f64 = cloud
        .points()
        .iter()
        .map(|p| {
            reference
                .points()
                .iter()
                .map(|q| (p - q).norm_squared())
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok((sum / cloud.len() as f64).sqrt())
}

/// Keeps the point closest to each occupied voxel's centroid; one point per
/// voxel. Output order follows the first appearance of each voxel in the
/// input, so the result is deterministic.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0) {
        return Err(Error::Usage("voxel size must be positive".into()));
    }
    let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let mut order: Vec<(i64, i64, i64)> = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = (
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        );
        cells
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(i);
    }
    let mut points = Vec::with_capacity(order.len());
    let mut normals = cloud.normals().map(|_| Vec::with_capacity(order.len()));
    for key in order {
        let members = &cells[&key];
        let centroid =
            members.iter().map(|&i| cloud.points()[i]).sum::<Vector3<f64>>() / members.len() as f64;
        let best = members
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da = (cloud.points()[a] - centroid).norm_squared();
                let db = (cloud.points()[b] - centroid).norm_squared();
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .unwrap();
        points.push(cloud.points()[best]);
        if let (Some(out), Some(ns)) = (normals.as_mut(), cloud.normals()) {
            out.push(ns[best]);
        }
    }
    Ok(PointCloud {
        points,
        normals,
    })
}
