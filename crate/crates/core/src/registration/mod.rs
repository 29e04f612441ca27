//! Rigid point-cloud registration: Kabsch alignment of corresponded point
//! sets and point-to-point ICP over an exact nearest-neighbour index.

mod kdtree;

pub use kdtree::NNIndex;

use nalgebra::Matrix3;

use crate::geometry::{PointCloud, RigidTransform};
use crate::{Error, Result};

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]`.
///
/// Needs at least 3 point pairs that are not all collinear. Reflections are
/// corrected by flipping the singular vector of the smallest singular value.
pub fn kabsch(src: &PointCloud, dst: &PointCloud) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::Usage(format!(
            "kabsch needs corresponded clouds, got {} vs {} points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "kabsch needs at least 3 point pairs, got {}",
            src.len()
        )));
    }
    let sc = src.centroid()?;
    let dc = dst.centroid()?;
    let mut h = Matrix3::zeros();
    for (p, q) in src.points().iter().zip(dst.points()) {
        h += (p - sc) * (q - dc).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let max_sv = sv.max();
    if max_sv <= 0.0 || sv[1] < 1e-9 * max_sv {
        return Err(Error::DegenerateGeometry(
            "kabsch point pairs are collinear or coincident".into(),
        ));
    }
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    // h = u * s * v_t with singular values sorted descending, so the optimal
    // rotation is v * u^T, det-corrected on the last singular direction.
    let mut d = Matrix3::identity();
    let det = (v_t.transpose() * u.transpose()).determinant();
    if det < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = v_t.transpose() * d * u.transpose();
    let translation = dc - rotation * sc;
    RigidTransform::new(rotation, translation)
}

/// ICP configuration. Distances in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop when the mean correspondence distance improves by less than this.
    pub convergence_tol: f64,
    /// Correspondences farther than this are dropped as outliers.
    pub max_correspondence_dist: f64,
    /// Fail with `IcpNoOverlap` if fewer inliers than this remain.
    pub min_inliers: usize,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tol: 1e-4,
            max_correspondence_dist: 5.0,
            min_inliers: 20,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Usage("icp max_iterations must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::Usage("icp convergence_tol must be positive".into()));
        }
        if !(self.max_correspondence_dist > 0.0) {
            return Err(Error::Usage(
                "icp max_correspondence_dist must be positive".into(),
            ));
        }
        if self.min_inliers < 3 {
            return Err(Error::Usage("icp min_inliers must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Full transform mapping source-cloud points into the target frame.
    pub transform: RigidTransform,
    pub iterations: usize,
    /// Mean inlier correspondence distance at the accepted solution.
    pub mean_correspondence_dist: f64,
    pub inlier_count: usize,
    /// True when iteration stopped because no further improvement was
    /// possible (tolerance reached or fixed point), false when it ran out of
    /// iterations or the correspondence geometry degenerated.
    pub converged: bool,
}

/// Point-to-point ICP aligning `src` to `target`, seeded with `init`.
///
/// Each iteration matches every transformed source point to its exact nearest
/// target point, gates matches by `max_correspondence_dist`, and re-solves
/// Kabsch over the inliers from the original source points. A step is only
/// accepted if it does not increase the mean inlier distance, so the reported
/// distance is non-increasing over iterations.
pub fn icp(
    src: &PointCloud,
    target: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    params.validate()?;
    if src.is_empty() || target.is_empty() {
        return Err(Error::DegenerateGeometry("icp on an empty cloud".into()));
    }
    let index = NNIndex::build(target.points())?;
    icp_with_index(src, target, &index, init, params)
}

/// ICP against a prebuilt target index (shareable across runs and threads).
pub fn icp_with_index(
    src: &PointCloud,
    target: &PointCloud,
    index: &NNIndex,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    params.validate()?;
    if src.is_empty() || target.is_empty() {
        return Err(Error::DegenerateGeometry("icp on an empty cloud".into()));
    }
    if index.len() != target.len() {
        return Err(Error::Usage(format!(
            "index holds {} points but target has {}",
            index.len(),
            target.len()
        )));
    }

    let correspond = |t: &RigidTransform| -> (Vec<(usize, usize)>, f64) {
        let mut pairs = Vec::new();
        let mut sum = 0.0;
        for (i, p) in src.points().iter().enumerate() {
            let (j, dist) = index.nearest(&t.apply(*p));
            if dist <= params.max_correspondence_dist {
                pairs.push((i, j));
                sum += dist;
            }
        }
        let mean = if pairs.is_empty() {
            f64::INFINITY
        } else {
            sum / pairs.len() as f64
        };
        (pairs, mean)
    };

    let mut current = *init;
    let (mut pairs, mut mean) = correspond(&current);
    if pairs.len() < params.min_inliers {
        return Err(Error::IcpNoOverlap {
            iteration: 0,
            inliers: pairs.len(),
            min_inliers: params.min_inliers,
        });
    }

    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=params.max_iterations {
        let src_sel = PointCloud::new(pairs.iter().map(|&(i, _)| src.points()[i]).collect())?;
        let dst_sel =
            PointCloud::new(pairs.iter().map(|&(_, j)| target.points()[j]).collect())?;
        let candidate = match kabsch(&src_sel, &dst_sel) {
            Ok(t) => t,
            Err(Error::DegenerateGeometry(_)) => break,
            Err(e) => return Err(e),
        };
        let (cand_pairs, cand_mean) = correspond(&candidate);
        if cand_pairs.len() < params.min_inliers {
            return Err(Error::IcpNoOverlap {
                iteration: iter,
                inliers: cand_pairs.len(),
                min_inliers: params.min_inliers,
            });
        }
        if cand_mean > mean {
            // Steps are only accepted when they do not worsen the mean, so a
            // non-improving candidate means the iteration is complete.
            converged = true;
            break;
        }
        let improvement = mean - cand_mean;
        current = candidate;
        pairs = cand_pairs;
        mean = cand_mean;
        iterations = iter;
        if improvement < params.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        transform: current,
        iterations,
        mean_correspondence_dist: mean,
        inlier_count: pairs.len(),
        converged,
    })
}
