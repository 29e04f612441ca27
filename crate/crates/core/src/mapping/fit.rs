use nalgebra::{DMatrix, DVector, Vector3};

use crate::geometry::PointCloud;
use crate::{Error, Result};

/// Primitive families supported by the parameter fitter, with the reported
/// parameters. All fits carry a nuisance axis/centre position (cx, cy) in
/// the object frame that is estimated but not reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveKind {
    /// radius_mm
    Cylinder,
    /// base_radius_mm, slope_deg
    Semicone,
    /// side1_mm (x), side2_mm (y)
    Cuboid,
    /// base_side_mm, slope_deg
    Semipyramid,
    /// big_radius_mm, small_radius_mm, joint_mm (axial z of the step)
    DoubleCylinder,
}

impl PrimitiveKind {
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            PrimitiveKind::Cylinder => &["radius_mm"],
            PrimitiveKind::Semicone => &["base_radius_mm", "slope_deg"],
            PrimitiveKind::Cuboid => &["side1_mm", "side2_mm"],
            PrimitiveKind::Semipyramid => &["base_side_mm", "slope_deg"],
            PrimitiveKind::DoubleCylinder => {
                &["big_radius_mm", "small_radius_mm", "joint_mm"]
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_names().len()
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "cylinder" => Ok(PrimitiveKind::Cylinder),
            "semicone" => Ok(PrimitiveKind::Semicone),
            "cuboid" => Ok(PrimitiveKind::Cuboid),
            "semipyramid" => Ok(PrimitiveKind::Semipyramid),
            "double_cylinder" | "double-cylinder" => Ok(PrimitiveKind::DoubleCylinder),
            other => Err(Error::Usage(format!(
                "unknown primitive kind {other:?} (cylinder, semicone, cuboid, semipyramid, double_cylinder)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Semicone => "semicone",
            PrimitiveKind::Cuboid => "cuboid",
            PrimitiveKind::Semipyramid => "semipyramid",
            PrimitiveKind::DoubleCylinder => "double_cylinder",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: PrimitiveKind,
    /// (name, value) pairs in the order of [`PrimitiveKind::param_names`].
    pub params: Vec<(&'static str, f64)>,
    pub rms_residual_mm: f64,
    pub iterations: usize,
}

/// Fits primitive parameters to a surface cloud by damped Gauss-Newton on
/// the perpendicular distance to the lateral (side-wall) surface, the part
/// of the primitive that side grasps observe.
///
/// The double-cylinder's joint height is a step discontinuity, invisible to
/// a gradient step, so it is found by an outer 1D scan with the smooth
/// parameters re-fitted per candidate.
pub fn fit_primitive_params(cloud: &PointCloud, kind: PrimitiveKind) -> Result<FitResult> {
    let min_points = 10 * kind.param_count();
    if cloud.len() < min_points {
        return Err(Error::Usage(format!(
            "{} fit needs at least {min_points} points, got {}",
            kind.label(),
            cloud.len()
        )));
    }
    let pts = cloud.points();
    match kind {
        PrimitiveKind::Cylinder => fit_cylinder(pts),
        PrimitiveKind::Semicone => fit_semicone(pts),
        PrimitiveKind::Cuboid => fit_cuboid(pts),
        PrimitiveKind::Semipyramid => fit_semipyramid(pts),
        PrimitiveKind::DoubleCylinder => fit_double_cylinder(pts),
    }
}

const LM_MAX_ITERATIONS: usize = 200;
const LM_LAMBDA_INIT: f64 = 1e-3;
const LM_LAMBDA_MAX: f64 = 1e12;

struct LmOutcome {
    theta: Vec<f64>,
    sse: f64,
    iterations: usize,
    converged: bool,
}

/// Levenberg-damped Gauss-Newton. `eval` writes one Jacobian row and
/// returns the residual for a point at the given parameters. Accepted steps
/// never increase the sum of squares.
fn lm_fit<F>(
    points: &[Vector3<f64>],
    theta0: Vec<f64>,
    mut eval: F,
    max_iterations: usize,
) -> LmOutcome
where
    F: FnMut(&[f64], &Vector3<f64>, &mut [f64]) -> f64,
{
    let p = theta0.len();
    let mut theta = theta0;
    let mut row = vec![0.0; p];
    let sse_of = |eval: &mut F, theta: &[f64], row: &mut [f64]| -> f64 {
        points
            .iter()
            .map(|pt| {
                let r = eval(theta, pt, row);
                r * r
            })
            .sum()
    };
    let mut sse = sse_of(&mut eval, &theta, &mut row);
    let mut lambda = LM_LAMBDA_INIT;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        let mut jtj = DMatrix::<f64>::zeros(p, p);
        let mut jtr = DVector::<f64>::zeros(p);
        for pt in points {
            let r = eval(&theta, pt, &mut row);
            for a in 0..p {
                jtr[a] += row[a] * r;
                for b in a..p {
                    jtj[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        let mut accepted = false;
        while lambda <= LM_LAMBDA_MAX {
            let mut damped = jtj.clone();
            for a in 0..p {
                damped[(a, a)] += lambda * jtj[(a, a)].max(1e-12);
            }
            let Some(delta) = damped.lu().solve(&(-&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            let cand_sse = sse_of(&mut eval, &cand, &mut row);
            if cand_sse <= sse {
                let improvement = sse - cand_sse;
                let step = delta.norm();
                theta = cand;
                sse = cand_sse;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if improvement <= 1e-12 * sse.max(1e-9) || step <= 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No descent direction left; the fit is at a (possibly local)
            // minimum up to damping limits.
            converged = true;
        }
        if converged {
            break;
        }
    }
    LmOutcome {
        theta,
        sse,
        iterations,
        converged,
    }
}

fn finish(
    kind: PrimitiveKind,
    values: Vec<f64>,
    outcome: &LmOutcome,
    n_points: usize,
) -> Result<FitResult> {
    let rms = (outcome.sse / n_points as f64).sqrt();
    if !outcome.converged {
        return Err(Error::FitDidNotConverge {
            iterations: outcome.iterations,
            rms_residual: rms,
            best: values,
        });
    }
    Ok(FitResult {
        kind,
        params: kind.param_names().iter().copied().zip(values).collect(),
        rms_residual_mm: rms,
        iterations: outcome.iterations,
    })
}

fn centroid_xy(pts: &[Vector3<f64>]) -> (f64, f64) {
    let n = pts.len() as f64;
    (
        pts.iter().map(|p| p.x).sum::<f64>() / n,
        pts.iter().map(|p| p.y).sum::<f64>() / n,
    )
}

fn fit_cylinder(pts: &[Vector3<f64>]) -> Result<FitResult> {
    let (cx, cy) = centroid_xy(pts);
    let r0 = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / pts.len() as f64;
    let outcome = lm_fit(
        pts,
        vec![cx, cy, r0],
        |theta, p, row| {
            let dx = p.x - theta[0];
            let dy = p.y - theta[1];
            let rho = (dx * dx + dy * dy).sqrt().max(1e-9);
            row[0] = -dx / rho;
            row[1] = -dy / rho;
            row[2] = -1.0;
            rho - theta[2]
        },
        LM_MAX_ITERATIONS,
    );
    finish(
        PrimitiveKind::Cylinder,
        vec![outcome.theta[2]],
        &outcome,
        pts.len(),
    )
}

/// Least-squares line a + b*z through (z, v) samples.
fn regress_on_z(pts: &[Vector3<f64>], value: impl Fn(&Vector3<f64>) -> f64) -> (f64, f64) {
    let n = pts.len() as f64;
    let mean_z = pts.iter().map(|p| p.z).sum::<f64>() / n;
    let mean_v = pts.iter().map(|p| value(p)).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for p in pts {
        cov += (p.z - mean_z) * (value(p) - mean_v);
        var += (p.z - mean_z) * (p.z - mean_z);
    }
    let b = if var > 1e-12 { cov / var } else { 0.0 };
    (mean_v - b * mean_z, b)
}

fn fit_semicone(pts: &[Vector3<f64>]) -> Result<FitResult> {
    let (cx, cy) = centroid_xy(pts);
    let (rb0, slope_reg) = regress_on_z(pts, |p| {
        ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
    });
    let s0 = (-slope_reg).atan().clamp(0.0, 0.8);
    let outcome = lm_fit(
        pts,
        vec![cx, cy, rb0.max(1.0), s0],
        |theta, p, row| {
            let dx = p.x - theta[0];
            let dy = p.y - theta[1];
            let rho = (dx * dx + dy * dy).sqrt().max(1e-9);
            let (rb, s) = (theta[2], theta[3]);
            let (sin_s, cos_s) = s.sin_cos();
            row[0] = cos_s * (-dx / rho);
            row[1] = cos_s * (-dy / rho);
            row[2] = -cos_s;
            row[3] = -(rho - rb) * sin_s + p.z * cos_s;
            (rho - rb) * cos_s + p.z * sin_s
        },
        LM_MAX_ITERATIONS,
    );
    finish(
        PrimitiveKind::Semicone,
        vec![outcome.theta[2], outcome.theta[3].to_degrees()],
        &outcome,
        pts.len(),
    )
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn fit_cuboid(pts: &[Vector3<f64>]) -> Result<FitResult> {
    let mut xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
    let mut ys: Vec<f64> = pts.iter().map(|p| p.y).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cx0 = 0.5 * (quantile(&xs, 0.01) + quantile(&xs, 0.99));
    let cy0 = 0.5 * (quantile(&ys, 0.01) + quantile(&ys, 0.99));
    let s1_0 = (quantile(&xs, 0.99) - quantile(&xs, 0.01)).max(1.0);
    let s2_0 = (quantile(&ys, 0.99) - quantile(&ys, 0.01)).max(1.0);
    let outcome = lm_fit(
        pts,
        vec![cx0, cy0, s1_0, s2_0],
        |theta, p, row| {
            let dx = p.x - theta[0];
            let dy = p.y - theta[1];
            let sx = if dx >= 0.0 { 1.0 } else { -1.0 };
            let sy = if dy >= 0.0 { 1.0 } else { -1.0 };
            let qx = dx.abs() - theta[2] / 2.0;
            let qy = dy.abs() - theta[3] / 2.0;
            row.iter_mut().for_each(|v| *v = 0.0);
            if qx > 0.0 && qy > 0.0 {
                let d = (qx * qx + qy * qy).sqrt().max(1e-12);
                row[0] = (qx / d) * (-sx);
                row[1] = (qy / d) * (-sy);
                row[2] = (qx / d) * (-0.5);
                row[3] = (qy / d) * (-0.5);
                d
            } else if qx >= qy {
                row[0] = -sx;
                row[2] = -0.5;
                qx
            } else {
                row[1] = -sy;
                row[3] = -0.5;
                qy
            }
        },
        LM_MAX_ITERATIONS,
    );
    finish(
        PrimitiveKind::Cuboid,
        vec![outcome.theta[2], outcome.theta[3]],
        &outcome,
        pts.len(),
    )
}

fn fit_semipyramid(pts: &[Vector3<f64>]) -> Result<FitResult> {
    let (cx, cy) = centroid_xy(pts);
    let (half0, slope_reg) = regress_on_z(pts, |p| (p.x - cx).abs().max((p.y - cy).abs()));
    let s0 = (-slope_reg).atan().clamp(0.0, 0.8);
    let outcome = lm_fit(
        pts,
        vec![cx, cy, (2.0 * half0).max(1.0), s0],
        |theta, p, row| {
            let dx = p.x - theta[0];
            let dy = p.y - theta[1];
            let (b, s) = (theta[2], theta[3]);
            let (sin_s, cos_s) = s.sin_cos();
            // Signed distance to each of the four slanted wall planes; the
            // nearest wall for points around the surface is the max.
            let faces = [
                (dx, 1.0, 0.0),
                (-dx, -1.0, 0.0),
                (dy, 0.0, 1.0),
                (-dy, 0.0, -1.0),
            ];
            let mut best = f64::NEG_INFINITY;
            let mut best_face = faces[0];
            for f in faces {
                let val = (f.0 - b / 2.0) * cos_s + p.z * sin_s;
                if val > best {
                    best = val;
                    best_face = f;
                }
            }
            let (coord, gx, gy) = best_face;
            row[0] = -gx * cos_s;
            row[1] = -gy * cos_s;
            row[2] = -cos_s / 2.0;
            row[3] = -(coord - b / 2.0) * sin_s + p.z * cos_s;
            best
        },
        LM_MAX_ITERATIONS,
    );
    finish(
        PrimitiveKind::Semipyramid,
        vec![outcome.theta[2], outcome.theta[3].to_degrees()],
        &outcome,
        pts.len(),
    )
}

fn fit_double_cylinder(pts: &[Vector3<f64>]) -> Result<FitResult> {
    let (zmin, zmax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, p| {
        (acc.0.min(p.z), acc.1.max(p.z))
    });
    if zmax - zmin < 4.0 {
        return Err(Error::DegenerateGeometry(
            "double-cylinder fit needs at least 4mm of axial extent".into(),
        ));
    }
    let radii_fit = |joint: f64| -> Option<LmOutcome> {
        let below = pts.iter().filter(|p| p.z < joint).count();
        let above = pts.len() - below;
        if below < 10 || above < 10 {
            return None;
        }
        let (cx, cy) = centroid_xy(pts);
        let mean_rho = |pred: &dyn Fn(&Vector3<f64>) -> bool| {
            let sel: Vec<f64> = pts
                .iter()
                .filter(|p| pred(p))
                .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
                .collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        let r1 = mean_rho(&|p| p.z < joint);
        let r2 = mean_rho(&|p| p.z >= joint);
        Some(lm_fit(
            pts,
            vec![cx, cy, r1, r2],
            |theta, p, row| {
                let dx = p.x - theta[0];
                let dy = p.y - theta[1];
                let rho = (dx * dx + dy * dy).sqrt().max(1e-9);
                let below = p.z < joint;
                row[0] = -dx / rho;
                row[1] = -dy / rho;
                row[2] = if below { -1.0 } else { 0.0 };
                row[3] = if below { 0.0 } else { -1.0 };
                rho - if below { theta[2] } else { theta[3] }
            },
            100,
        ))
    };

    let mut best: Option<(f64, LmOutcome)> = None;
    let consider = |joint: f64, best: &mut Option<(f64, LmOutcome)>| {
        if let Some(outcome) = radii_fit(joint) {
            if best.as_ref().map_or(true, |(_, b)| outcome.sse < b.sse) {
                *best = Some((joint, outcome));
            }
        }
    };
    let mut joint = zmin + 1.0;
    while joint < zmax - 1.0 {
        consider(joint, &mut best);
        joint += 1.0;
    }
    let Some((coarse_joint, _)) = best.as_ref().map(|(j, o)| (*j, o.sse)) else {
        return Err(Error::DegenerateGeometry(
            "no joint position leaves enough points on both sides".into(),
        ));
    };
    let mut fine = coarse_joint - 1.0;
    while fine <= coarse_joint + 1.0 {
        consider(fine, &mut best);
        fine += 0.1;
    }
    let (joint, outcome) = best.unwrap();
    // Bigger radius is reported first regardless of which side it sits on.
    let (r_big, r_small) = if outcome.theta[2] >= outcome.theta[3] {
        (outcome.theta[2], outcome.theta[3])
    } else {
        (outcome.theta[3], outcome.theta[2])
    };
    finish(
        PrimitiveKind::DoubleCylinder,
        vec![r_big, r_small, joint],
        &outcome,
        pts.len(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn param(result: &FitResult, name: &str) -> f64 {
        result
            .params
            .iter()
            .find(|(n, _)| *n == name)
            .unwrap_or_else(|| panic!("missing param {name}"))
            .1
    }

    fn cylinder_cloud(cx: f64, cy: f64, r: f64, zmax: f64) -> PointCloud {
        let mut pts = Vec::new();
        for zi in 0..30 {
            let z = zmax * zi as f64 / 29.0;
            for ai in 0..36 {
                let a = std::f64::consts::TAU * ai as f64 / 36.0;
                pts.push(Vector3::new(cx + r * a.cos(), cy + r * a.sin(), z));
            }
        }
        PointCloud::new(pts).unwrap()
    }

    #[test]
    fn cylinder_radius_recovered_exactly() {
        let cloud = cylinder_cloud(2.0, -3.0, 25.0, 60.0);
        let fit = fit_primitive_params(&cloud, PrimitiveKind::Cylinder).unwrap();
        assert!((param(&fit, "radius_mm") - 25.0).abs() < 1e-6, "{fit:?}");
        assert!(fit.rms_residual_mm < 1e-6);
    }

    #[test]
    fn cylinder_fit_tolerates_radial_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let base = cylinder_cloud(0.0, 0.0, 25.0, 60.0);
        let noisy = PointCloud::new(
            base.points()
                .iter()
                .map(|p| {
                    let dir = Vector3::new(p.x, p.y, 0.0).normalize();
                    p + dir * rng.random_range(-0.05..0.05)
                })
                .collect(),
        )
        .unwrap();
        let fit = fit_primitive_params(&noisy, PrimitiveKind::Cylinder).unwrap();
        assert!((param(&fit, "radius_mm") - 25.0).abs() < 0.05);
    }

    #[test]
    fn semicone_recovers_radius_and_slope() {
        let (rb, slope_deg, h) = (20.0, 7.5, 60.0);
        let tan_s = (slope_deg as f64).to_radians().tan();
        let mut pts = Vec::new();
        for zi in 0..40 {
            let z = h * zi as f64 / 39.0;
            let r = rb - z * tan_s;
            for ai in 0..24 {
                let a = std::f64::consts::TAU * ai as f64 / 24.0;
                pts.push(Vector3::new(1.0 + r * a.cos(), -2.0 + r * a.sin(), z));
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let fit = fit_primitive_params(&cloud, PrimitiveKind::Semicone).unwrap();
        assert!((param(&fit, "base_radius_mm") - rb).abs() < 1e-5, "{fit:?}");
        assert!((param(&fit, "slope_deg") - slope_deg).abs() < 1e-4, "{fit:?}");
    }

    #[test]
    fn cuboid_recovers_both_sides() {
        let (s1, s2) = (25.0, 20.0);
        let (cx, cy) = (1.0, 2.0);
        let mut pts = Vec::new();
        for zi in 0..25 {
            let z = 80.0 * zi as f64 / 24.0;
            for ui in 1..20 {
                let ux = -s1 / 2.0 + s1 * ui as f64 / 20.0;
                let uy = -s2 / 2.0 + s2 * ui as f64 / 20.0;
                pts.push(Vector3::new(cx + s1 / 2.0, cy + uy, z));
                pts.push(Vector3::new(cx - s1 / 2.0, cy + uy, z));
                pts.push(Vector3::new(cx + ux, cy + s2 / 2.0, z));
                pts.push(Vector3::new(cx + ux, cy - s2 / 2.0, z));
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let fit = fit_primitive_params(&cloud, PrimitiveKind::Cuboid).unwrap();
        assert!((param(&fit, "side1_mm") - s1).abs() < 1e-5, "{fit:?}");
        assert!((param(&fit, "side2_mm") - s2).abs() < 1e-5, "{fit:?}");
    }

    #[test]
    fn semipyramid_recovers_base_and_slope() {
        let (base, slope_deg, h) = (20.0, 7.5, 60.0);
        let tan_s = (slope_deg as f64).to_radians().tan();
        let mut pts = Vec::new();
        for zi in 0..30 {
            let z = h * zi as f64 / 29.0;
            let half = base / 2.0 - z * tan_s;
            for ui in 1..12 {
                let u = -half + 2.0 * half * ui as f64 / 12.0;
                pts.push(Vector3::new(half, u, z));
                pts.push(Vector3::new(-half, u, z));
                pts.push(Vector3::new(u, half, z));
                pts.push(Vector3::new(u, -half, z));
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let fit = fit_primitive_params(&cloud, PrimitiveKind::Semipyramid).unwrap();
        assert!((param(&fit, "base_side_mm") - base).abs() < 1e-4, "{fit:?}");
        assert!((param(&fit, "slope_deg") - slope_deg).abs() < 1e-3, "{fit:?}");
    }

    #[test]
    fn double_cylinder_finds_the_joint() {
        let (r_big, r_small, joint) = (16.0, 11.0, 60.0);
        let mut pts = Vec::new();
        for zi in 0..55 {
            let z = 110.0 * zi as f64 / 54.0;
            let r = if z < joint { r_big } else { r_small };
            for ai in 0..24 {
                let a = std::f64::consts::TAU * ai as f64 / 24.0;
                pts.push(Vector3::new(0.5 + r * a.cos(), -1.0 + r * a.sin(), z));
            }
        }
        let cloud = PointCloud::new(pts).unwrap();
        let fit = fit_primitive_params(&cloud, PrimitiveKind::DoubleCylinder).unwrap();
        assert!((param(&fit, "big_radius_mm") - r_big).abs() < 1e-3, "{fit:?}");
        assert!((param(&fit, "small_radius_mm") - r_small).abs() < 1e-3, "{fit:?}");
        // The sampled rings straddle the step at ~2mm spacing; the joint is
        // only observable up to that gap.
        assert!((param(&fit, "joint_mm") - joint).abs() < 2.1, "{fit:?}");
    }

    #[test]
    fn too_few_points_is_a_usage_error() {
        let cloud = PointCloud::new(vec![Vector3::zeros(); 5]).unwrap();
        assert!(fit_primitive_params(&cloud, PrimitiveKind::Cylinder).is_err());
    }

    #[test]
    fn kind_parsing_round_trips() {
        for kind in [
            PrimitiveKind::Cylinder,
            PrimitiveKind::Semicone,
            PrimitiveKind::Cuboid,
            PrimitiveKind::Semipyramid,
            PrimitiveKind::DoubleCylinder,
        ] {
            assert_eq!(PrimitiveKind::parse(kind.label()).unwrap(), kind);
        }
        assert!(PrimitiveKind::parse("octahedron").is_err());
    }
}
