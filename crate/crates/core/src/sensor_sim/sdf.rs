use nalgebra::Vector3;

use crate::geometry::RigidTransform;
use crate::{Error, Result};

/// Solid primitive in its local frame. Axisymmetric and prismatic shapes
/// stand on z = 0 with their axis along +z; the sphere is centred at the
/// origin. Signed distances are exact (negative inside).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere {
        radius: f64,
    },
    Cylinder {
        radius: f64,
        height: f64,
    },
    /// Truncated cone: `base_radius` at z = 0, shrinking by `slope_deg`
    /// (wall angle from vertical) up to z = `height`.
    Cone {
        base_radius: f64,
        slope_deg: f64,
        height: f64,
    },
    /// Axis-aligned box centred in x/y, base on z = 0.
    Cuboid {
        size_x: f64,
        size_y: f64,
        size_z: f64,
    },
    /// Truncated square pyramid: `base_side` at z = 0, walls tilted inward
    /// by `slope_deg` from vertical, up to z = `height`.
    Pyramid {
        base_side: f64,
        slope_deg: f64,
        height: f64,
    },
}

impl Primitive {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Usage(msg));
        match *self {
            Primitive::Sphere { radius } => {
                if !(radius > 0.0) {
                    return bad(format!("sphere radius {radius} must be positive"));
                }
            }
            Primitive::Cylinder { radius, height } => {
                if !(radius > 0.0) || !(height > 0.0) {
                    return bad(format!(
                        "cylinder radius {radius} and height {height} must be positive"
                    ));
                }
            }
            Primitive::Cone {
                base_radius,
                slope_deg,
                height,
            } => {
                if !(base_radius > 0.0) || !(height > 0.0) {
                    return bad(format!(
                        "cone base radius {base_radius} and height {height} must be positive"
                    ));
                }
                if !(0.0..80.0).contains(&slope_deg) {
                    return bad(format!("cone slope {slope_deg} deg outside [0, 80)"));
                }
                if self.top_radius() < 0.0 {
                    return bad(format!(
                        "cone tapers below zero radius before reaching height {height}"
                    ));
                }
            }
            Primitive::Cuboid {
                size_x,
                size_y,
                size_z,
            } => {
                if !(size_x > 0.0) || !(size_y > 0.0) || !(size_z > 0.0) {
                    return bad(format!(
                        "cuboid sides ({size_x}, {size_y}, {size_z}) must be positive"
                    ));
                }
            }
            Primitive::Pyramid {
                base_side,
                slope_deg,
                height,
            } => {
                if !(base_side > 0.0) || !(height > 0.0) {
                    return bad(format!(
                        "pyramid base side {base_side} and height {height} must be positive"
                    ));
                }
                if !(0.0..80.0).contains(&slope_deg) {
                    return bad(format!("pyramid slope {slope_deg} deg outside [0, 80)"));
                }
                if self.top_radius() < 0.0 {
                    return bad(format!(
                        "pyramid tapers below zero side before reaching height {height}"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Top radius (cone) or top half-side (pyramid); unused otherwise.
    fn top_radius(&self) -> f64 {
        match *self {
            Primitive::Cone {
                base_radius,
                slope_deg,
                height,
            } => base_radius - height * slope_deg.to_radians().tan(),
            Primitive::Pyramid {
                base_side,
                slope_deg,
                height,
            } => base_side / 2.0 - height * slope_deg.to_radians().tan(),
            _ => 0.0,
        }
    }

    /// Exact signed distance in the primitive's local frame.
    pub fn sdf(&self, p: Vector3<f64>) -> f64 {
        match *self {
            Primitive::Sphere { radius } => p.norm() - radius,
            Primitive::Cylinder { radius, height } => {
                let half = height / 2.0;
                let dr = (p.x * p.x + p.y * p.y).sqrt() - radius;
                let dz = (p.z - half).abs() - half;
                let outside =
                    (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
            Primitive::Cone {
                base_radius,
                height,
                ..
            } => {
                let rho = (p.x * p.x + p.y * p.y).sqrt();
                let rt = self.top_radius();
                let q = [rho, p.z];
                // Boundary polyline of the revolved section, axis excluded.
                let verts = [[0.0, 0.0], [base_radius, 0.0], [rt, height], [0.0, height]];
                let mut dist = f64::INFINITY;
                for seg in verts.windows(2) {
                    dist = dist.min(point_segment_distance_2d(q, seg[0], seg[1]));
                }
                let r_at = base_radius + (rt - base_radius) * (p.z / height);
                let inside = p.z >= 0.0 && p.z <= height && rho <= r_at;
                if inside {
                    -dist
                } else {
                    dist
                }
            }
            Primitive::Cuboid {
                size_x,
                size_y,
                size_z,
            } => {
                let q = Vector3::new(
                    p.x.abs() - size_x / 2.0,
                    p.y.abs() - size_y / 2.0,
                    (p.z - size_z / 2.0).abs() - size_z / 2.0,
                );
                let outside = Vector3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                outside + q.x.max(q.y).max(q.z).min(0.0)
            }
            Primitive::Pyramid {
                base_side,
                slope_deg,
                height,
            } => {
                let b = base_side / 2.0;
                let t = b - height * slope_deg.to_radians().tan();
                pyramid_frustum_sdf(p, b, t, height)
            }
        }
    }

    /// Axis-aligned bounds in the local frame.
    pub fn local_aabb(&self) -> (Vector3<f64>, Vector3<f64>) {
        match *self {
            Primitive::Sphere { radius } => {
                (Vector3::repeat(-radius), Vector3::repeat(radius))
            }
            Primitive::Cylinder { radius, height } => (
                Vector3::new(-radius, -radius, 0.0),
                Vector3::new(radius, radius, height),
            ),
            Primitive::Cone {
                base_radius,
                height,
                ..
            } => (
                Vector3::new(-base_radius, -base_radius, 0.0),
                Vector3::new(base_radius, base_radius, height),
            ),
            Primitive::Cuboid {
                size_x,
                size_y,
                size_z,
            } => (
                Vector3::new(-size_x / 2.0, -size_y / 2.0, 0.0),
                Vector3::new(size_x / 2.0, size_y / 2.0, size_z),
            ),
            Primitive::Pyramid {
                base_side, height, ..
            } => (
                Vector3::new(-base_side / 2.0, -base_side / 2.0, 0.0),
                Vector3::new(base_side / 2.0, base_side / 2.0, height),
            ),
        }
    }
}

fn point_segment_distance_2d(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = ap[0] - t * ab[0];
    let dy = ap[1] - t * ab[1];
    (dx * dx + dy * dy).sqrt()
}

/// Exact signed distance to a square frustum with half-sides `b` (bottom,
/// z = 0) and `t` (top, z = h): max of face-plane distances inside, minimum
/// triangle distance over the triangulated boundary outside.
fn pyramid_frustum_sdf(p: Vector3<f64>, b: f64, t: f64, h: f64) -> f64 {
    // Outward side-plane normal for +x: (h, 0, b - t) normalized, through (b, 0, 0).
    let nside = (h * h + (b - t) * (b - t)).sqrt();
    let side = |coord: f64, z: f64| (h * (coord - b) + (b - t) * z) / nside;
    let planes = [
        -p.z,
        p.z - h,
        side(p.x, p.z),
        side(-p.x, p.z),
        side(p.y, p.z),
        side(-p.y, p.z),
    ];
    let max_plane = planes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_plane <= 0.0 {
        return max_plane;
    }
    // Exploit the 4-fold symmetry: fold into the x >= |y| wedge and test the
    // +x side face plus shared top/bottom geometry.
    let (ax, ay) = (p.x.abs(), p.y.abs());
    let (fx, fy) = if ax >= ay { (ax, ay) } else { (ay, ax) };
    let fp = Vector3::new(fx, fy, p.z);
    let verts = [
        Vector3::new(b, -b, 0.0),
        Vector3::new(b, b, 0.0),
        Vector3::new(t, t, h),
        Vector3::new(t, -t, h),
        Vector3::new(-b, -b, 0.0),
        Vector3::new(-b, b, 0.0),
        Vector3::new(-t, t, h),
        Vector3::new(-t, -t, h),
    ];
    // +x side face, bottom, and top, each as two triangles.
    let tris = [
        [verts[0], verts[1], verts[2]],
        [verts[0], verts[2], verts[3]],
        [verts[0], verts[1], verts[5]],
        [verts[0], verts[5], verts[4]],
        [verts[3], verts[2], verts[6]],
        [verts[3], verts[6], verts[7]],
    ];
    let mut best = f64::INFINITY;
    for tri in &tris {
        best = best.min(point_triangle_distance_sq(fp, tri[0], tri[1], tri[2]));
    }
    best.sqrt()
}

fn point_triangle_distance_sq(
    p: Vector3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
    c: Vector3<f64>,
) -> f64 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (ap - ab * t).norm_squared();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (ap - ac * t).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - (c - b) * t).norm_squared();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (ap - ab * v - ac * w).norm_squared()
}

/// How a part combines into the model: material is added or carved away.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineOp {
    Union,
    Subtract,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPart {
    pub primitive: Primitive,
    /// Part-local to model-frame transform.
    pub pose: RigidTransform,
    pub op: CombineOp,
}

/// Solid object assembled from posed primitives with union/subtract ops,
/// evaluated in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub name: String,
    pub parts: Vec<ModelPart>,
}

impl ObjectModel {
    pub fn new(name: impl Into<String>, parts: Vec<ModelPart>) -> Result<Self> {
        let name = name.into();
        if parts.is_empty() {
            return Err(Error::Usage(format!("model {name:?} has no parts")));
        }
        if parts[0].op != CombineOp::Union {
            return Err(Error::Usage(format!(
                "model {name:?}: first part must be a union"
            )));
        }
        for part in &parts {
            part.primitive.validate()?;
        }
        Ok(Self { name, parts })
    }

    /// Signed distance at a point in the model frame. A lower bound on true
    /// distance wherever subtractions interact, exact elsewhere.
    pub fn sdf(&self, p: Vector3<f64>) -> f64 {
        self.view(&RigidTransform::identity()).sdf(p)
    }

    /// Prepares evaluation of the SDF at points expressed in `query_frame`
    /// (a pose in the model frame, e.g. the sensor pose). All per-part frame
    /// chains are composed once here, so repeated queries are cheap and
    /// bitwise reproducible for a given relative configuration.
    pub fn view(&self, query_frame: &RigidTransform) -> SdfView<'_> {
        let part_from_query = self
            .parts
            .iter()
            .map(|part| part.pose.invert().compose(query_frame))
            .collect();
        SdfView {
            parts: &self.parts,
            part_from_query,
        }
    }

    /// World-frame bounds of all union parts.
    pub fn bbox(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for part in &self.parts {
            if part.op != CombineOp::Union {
                continue;
            }
            let (plo, phi) = part.primitive.local_aabb();
            for i in 0..8 {
                let corner = Vector3::new(
                    if i & 1 == 0 { plo.x } else { phi.x },
                    if i & 2 == 0 { plo.y } else { phi.y },
                    if i & 4 == 0 { plo.z } else { phi.z },
                );
                let w = part.pose.apply(corner);
                lo = lo.inf(&w);
                hi = hi.sup(&w);
            }
        }
        (lo, hi)
    }
}

/// SDF evaluator bound to a fixed query frame. See [`ObjectModel::view`].
pub struct SdfView<'a> {
    parts: &'a [ModelPart],
    part_from_query: Vec<RigidTransform>,
}

impl SdfView<'_> {
    pub fn sdf(&self, p: Vector3<f64>) -> f64 {
        let mut d = f64::INFINITY;
        for (part, frame) in self.parts.iter().zip(&self.part_from_query) {
            let local = part.primitive.sdf(frame.apply(p));
            d = match part.op {
                CombineOp::Union => d.min(local),
                CombineOp::Subtract => d.max(-local),
            };
        }
        d
    }
}

/// Marches a ray through the SDF and returns the distance to the first
/// surface crossing, refined by bisection, or None if nothing is hit within
/// `t_max`. The start point must be outside the solid.
pub fn raycast(
    view: &SdfView<'_>,
    origin: Vector3<f64>,
    dir: Vector3<f64>,
    t_max: f64,
) -> Option<f64> {
    const MIN_STEP: f64 = 1e-4;
    const MAX_STEPS: usize = 200_000;
    let mut t = 0.0;
    let mut d_prev = view.sdf(origin);
    if d_prev <= 0.0 {
        return Some(0.0);
    }
    for _ in 0..MAX_STEPS {
        let step = d_prev.max(MIN_STEP);
        let t_next = t + step;
        if t_next > t_max {
            return None;
        }
        let d = view.sdf(origin + dir * t_next);
        if d <= 0.0 {
            // Bracketed: bisect [t, t_next] down to the crossing.
            let (mut lo, mut hi) = (t, t_next);
            for _ in 0..48 {
                let mid = 0.5 * (lo + hi);
                if view.sdf(origin + dir * mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        t = t_next;
        d_prev = d;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn sphere_sdf_is_radial() {
        let s = Primitive::Sphere { radius: 10.0 };
        assert_relative_eq!(s.sdf(Vector3::new(13.0, 0.0, 0.0)), 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.sdf(Vector3::new(0.0, -4.0, 0.0)), -6.0, epsilon = 1e-12);
        assert_relative_eq!(s.sdf(Vector3::zeros()), -10.0, epsilon = 1e-12);
    }

    #[test]
    fn cylinder_sdf_known_points() {
        let c = Primitive::Cylinder { radius: 5.0, height: 20.0 };
        // Beside the wall, above the cap, and off a rim corner.
        assert_relative_eq!(c.sdf(Vector3::new(7.0, 0.0, 10.0)), 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.sdf(Vector3::new(0.0, 0.0, 23.0)), 3.0, epsilon = 1e-12);
        assert_relative_eq!(
            c.sdf(Vector3::new(8.0, 0.0, 24.0)),
            5.0,
            epsilon = 1e-12
        );
        // Inside: nearest surface is the wall.
        assert_relative_eq!(c.sdf(Vector3::new(1.0, 0.0, 10.0)), -4.0, epsilon = 1e-12);
        // Below the base plane.
        assert_relative_eq!(c.sdf(Vector3::new(0.0, 0.0, -2.5)), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_slope_cone_matches_cylinder() {
        let cone = Primitive::Cone { base_radius: 5.0, slope_deg: 0.0, height: 20.0 };
        let cyl = Primitive::Cylinder { radius: 5.0, height: 20.0 };
        for p in [
            Vector3::new(7.0, 1.0, 3.0),
            Vector3::new(0.0, 0.0, 25.0),
            Vector3::new(2.0, -2.0, 10.0),
            Vector3::new(-9.0, 0.5, -4.0),
        ] {
            assert_relative_eq!(cone.sdf(p), cyl.sdf(p), epsilon = 1e-9);
        }
    }

    #[test]
    fn cone_lateral_surface_distance() {
        // 45-degree wall: base radius 10 shrinking to 5 over height 5.
        let cone = Primitive::Cone { base_radius: 10.0, slope_deg: 45.0, height: 5.0 };
        // Point on the mid-wall: radius 7.5 at z = 2.5.
        assert_relative_eq!(cone.sdf(Vector3::new(7.5, 0.0, 2.5)), 0.0, epsilon = 1e-9);
        // One unit along the outward wall normal (1/sqrt2, 0, 1/sqrt2).
        let n = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            cone.sdf(Vector3::new(7.5 + n, 0.0, 2.5 + n)),
            1.0,
            epsilon = 1e-9
        );
        // Far out past the base rim.
        assert_relative_eq!(cone.sdf(Vector3::new(20.0, 0.0, 0.0)), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn cuboid_sdf_known_points() {
        let b = Primitive::Cuboid { size_x: 10.0, size_y: 20.0, size_z: 30.0 };
        // Centred in x/y, base at z = 0.
        assert_relative_eq!(b.sdf(Vector3::new(7.0, 0.0, 15.0)), 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            b.sdf(Vector3::new(10.0, 15.0, 35.0)),
            75.0f64.sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(b.sdf(Vector3::new(0.0, 0.0, 15.0)), -5.0, epsilon = 1e-12);
    }

    #[test]
    fn pyramid_exact_points() {
        // Walls tilted 45 degrees: base side 20 to top side 10 over height 5.
        let p = Primitive::Pyramid { base_side: 20.0, slope_deg: 45.0, height: 5.0 };
        // Top face centre, from above.
        assert_relative_eq!(p.sdf(Vector3::new(0.0, 0.0, 8.0)), 3.0, epsilon = 1e-9);
        // Mid-wall point on the +x face and one unit along its normal.
        assert_relative_eq!(p.sdf(Vector3::new(8.75, 0.0, 1.25)), 0.0, epsilon = 1e-9);
        let n = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            p.sdf(Vector3::new(8.75 + n, 0.0, 1.25 + n)),
            1.0,
            epsilon = 1e-9
        );
        // Inside, near the base centre: nearest face is the base.
        assert_relative_eq!(p.sdf(Vector3::new(0.0, 0.0, 1.0)), -1.0, epsilon = 1e-9);
        // Symmetric in the four wall directions.
        for (x, y) in [(8.75, 0.0), (-8.75, 0.0), (0.0, 8.75), (0.0, -8.75)] {
            assert_relative_eq!(p.sdf(Vector3::new(x, y, 1.25)), 0.0, epsilon = 1e-9);
        }
    }

    /// Distance oracle for the pyramid: min distance to a densely sampled
    /// frustum surface, signed by the half-space test.
    fn pyramid_numeric_sdf(base_side: f64, slope_deg: f64, height: f64, q: Vector3<f64>) -> f64 {
        let tan_s = slope_deg.to_radians().tan();
        let half = |z: f64| base_side / 2.0 - z * tan_s;
        let step = 0.05;
        let mut best = f64::INFINITY;
        // Base (z=0) and top (z=height) squares.
        for &(z, h) in &[(0.0, base_side / 2.0), (height, half(height))] {
            let n = (2.0 * h / step).ceil() as i32;
            for i in 0..=n {
                for j in 0..=n {
                    let x = -h + 2.0 * h * i as f64 / n as f64;
                    let y = -h + 2.0 * h * j as f64 / n as f64;
                    best = best.min((q - Vector3::new(x, y, z)).norm());
                }
            }
        }
        // Four walls.
        let nz = (height / step).ceil() as i32;
        for k in 0..=nz {
            let z = height * k as f64 / nz as f64;
            let h = half(z);
            let n = (2.0 * h / step).ceil().max(1.0) as i32;
            for i in 0..=n {
                let u = -h + 2.0 * h * i as f64 / n as f64;
                for p in [
                    Vector3::new(h, u, z),
                    Vector3::new(-h, u, z),
                    Vector3::new(u, h, z),
                    Vector3::new(u, -h, z),
                ] {
                    best = best.min((q - p).norm());
                }
            }
        }
        let inside = q.z >= 0.0 && q.z <= height && q.x.abs().max(q.y.abs()) <= half(q.z);
        if inside {
            -best
        } else {
            best
        }
    }

    #[test]
    fn pyramid_matches_numeric_oracle() {
        let (base, slope, height) = (18.0, 12.0, 9.0);
        let p = Primitive::Pyramid { base_side: base, slope_deg: slope, height };
        let mut q = 0.123f64;
        // Low-discrepancy-ish sweep over a box around the frustum.
        for _ in 0..60 {
            q = (q * 997.0).fract();
            let x = -14.0 + 28.0 * q;
            q = (q * 997.0).fract();
            let y = -14.0 + 28.0 * q;
            q = (q * 997.0).fract();
            let z = -4.0 + 17.0 * q;
            let probe = Vector3::new(x, y, z);
            let got = p.sdf(probe);
            let want = pyramid_numeric_sdf(base, slope, height, probe);
            // The sampled oracle over-estimates by at most the sample pitch.
            assert!(
                (got - want).abs() < 0.06,
                "sdf mismatch at {probe:?}: got {got}, oracle {want}"
            );
        }
    }

    fn all_primitives() -> Vec<Primitive> {
        vec![
            Primitive::Sphere { radius: 8.0 },
            Primitive::Cylinder { radius: 5.0, height: 30.0 },
            Primitive::Cone { base_radius: 9.0, slope_deg: 10.0, height: 25.0 },
            Primitive::Cuboid { size_x: 12.0, size_y: 8.0, size_z: 20.0 },
            Primitive::Pyramid { base_side: 14.0, slope_deg: 8.0, height: 22.0 },
        ]
    }

    proptest! {
        // Exact SDFs are 1-Lipschitz; a violation means some region
        // under- or over-states its distance to the surface.
        #[test]
        fn sdf_is_one_lipschitz(
            idx in 0usize..5,
            ax in -20.0..20.0f64, ay in -20.0..20.0f64, az in -10.0..35.0f64,
            bx in -20.0..20.0f64, by in -20.0..20.0f64, bz in -10.0..35.0f64,
        ) {
            let prim = all_primitives()[idx];
            let a = Vector3::new(ax, ay, az);
            let b = Vector3::new(bx, by, bz);
            let lhs = (prim.sdf(a) - prim.sdf(b)).abs();
            prop_assert!(lhs <= (a - b).norm() + 1e-9);
        }

        // On-surface points found by walking back along the gradient should
        // evaluate to roughly zero (sanity for the local_aabb bounds too).
        #[test]
        fn aabb_contains_the_solid(idx in 0usize..5, px in -25.0..25.0f64, py in -25.0..25.0f64, pz in -15.0..40.0f64) {
            let prim = all_primitives()[idx];
            let p = Vector3::new(px, py, pz);
            let (lo, hi) = prim.local_aabb();
            let inside_box = (lo.x..=hi.x).contains(&p.x)
                && (lo.y..=hi.y).contains(&p.y)
                && (lo.z..=hi.z).contains(&p.z);
            if prim.sdf(p) <= 0.0 {
                prop_assert!(inside_box, "solid point {p:?} escapes aabb {lo:?}..{hi:?}");
            }
        }
    }

    #[test]
    fn union_takes_the_min() {
        let model = ObjectModel::new(
            "two-spheres",
            vec![
                ModelPart {
                    primitive: Primitive::Sphere { radius: 5.0 },
                    pose: RigidTransform::identity(),
                    op: CombineOp::Union,
                },
                ModelPart {
                    primitive: Primitive::Sphere { radius: 5.0 },
                    pose: RigidTransform::from_translation(Vector3::new(20.0, 0.0, 0.0)),
                    op: CombineOp::Union,
                },
            ],
        )
        .unwrap();
        assert_relative_eq!(model.sdf(Vector3::new(10.0, 0.0, 0.0)), 5.0, epsilon = 1e-12);
        assert_relative_eq!(model.sdf(Vector3::new(20.0, 0.0, 0.0)), -5.0, epsilon = 1e-12);
    }

    #[test]
    fn subtract_carves_material_out() {
        // A sphere with a cylindrical bore along +z.
        let model = ObjectModel::new(
            "bored-sphere",
            vec![
                ModelPart {
                    primitive: Primitive::Sphere { radius: 10.0 },
                    pose: RigidTransform::identity(),
                    op: CombineOp::Union,
                },
                ModelPart {
                    primitive: Primitive::Cylinder { radius: 2.0, height: 40.0 },
                    pose: RigidTransform::from_translation(Vector3::new(0.0, 0.0, -20.0)),
                    op: CombineOp::Subtract,
                },
            ],
        )
        .unwrap();
        // Bore axis is now outside the solid.
        assert!(model.sdf(Vector3::zeros()) > 0.0);
        assert_relative_eq!(model.sdf(Vector3::zeros()), 2.0, epsilon = 1e-12);
        // Material remains away from the bore.
        assert!(model.sdf(Vector3::new(6.0, 0.0, 0.0)) < 0.0);
    }

    #[test]
    fn first_part_must_union() {
        let err = ObjectModel::new(
            "hole-only",
            vec![ModelPart {
                primitive: Primitive::Sphere { radius: 1.0 },
                pose: RigidTransform::identity(),
                op: CombineOp::Subtract,
            }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn view_matches_direct_evaluation() {
        let model = ObjectModel::new(
            "posed-cylinder",
            vec![ModelPart {
                primitive: Primitive::Cylinder { radius: 4.0, height: 25.0 },
                pose: RigidTransform::rotation_y(0.4)
                    .compose(&RigidTransform::from_translation(Vector3::new(3.0, -2.0, 1.0))),
                op: CombineOp::Union,
            }],
        )
        .unwrap();
        let frame = RigidTransform::rotation_z(1.1)
            .compose(&RigidTransform::from_translation(Vector3::new(-5.0, 8.0, 2.0)));
        let view = model.view(&frame);
        for p in [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(4.0, 4.0, 10.0),
            Vector3::new(-6.0, 2.0, 18.0),
        ] {
            prop_assert_close(view.sdf(p), model.sdf(frame.apply(p)));
        }
    }

    fn prop_assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn identical_views_evaluate_bitwise_identically() {
        let model = ObjectModel::new(
            "m",
            vec![ModelPart {
                primitive: Primitive::Cone { base_radius: 7.0, slope_deg: 5.0, height: 30.0 },
                pose: RigidTransform::rotation_x(0.7),
                op: CombineOp::Union,
            }],
        )
        .unwrap();
        let frame = RigidTransform::rotation_z(0.3)
            .compose(&RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0)));
        let va = model.view(&frame);
        let vb = model.view(&frame);
        for i in 0..50 {
            let p = Vector3::new(i as f64 * 0.37, -3.0 + i as f64 * 0.11, i as f64 * 0.23);
            assert_eq!(va.sdf(p).to_bits(), vb.sdf(p).to_bits());
        }
    }

    #[test]
    fn raycast_hits_a_sphere_where_geometry_says() {
        let model = ObjectModel::new(
            "ball",
            vec![ModelPart {
                primitive: Primitive::Sphere { radius: 10.0 },
                pose: RigidTransform::identity(),
                op: CombineOp::Union,
            }],
        )
        .unwrap();
        let view = model.view(&RigidTransform::identity());
        let t = raycast(&view, Vector3::new(0.0, 0.0, -30.0), Vector3::z(), 100.0).unwrap();
        assert_relative_eq!(t, 20.0, epsilon = 1e-6);
        // Grazing offset ray.
        let t = raycast(&view, Vector3::new(6.0, 0.0, -30.0), Vector3::z(), 100.0).unwrap();
        assert_relative_eq!(t, 22.0, epsilon = 1e-6);
        // Clean miss.
        assert!(raycast(&view, Vector3::new(30.0, 0.0, -30.0), Vector3::z(), 100.0).is_none());
        // Start inside.
        assert_eq!(raycast(&view, Vector3::zeros(), Vector3::z(), 100.0), Some(0.0));
    }

    #[test]
    fn bbox_covers_rotated_parts() {
        let model = ObjectModel::new(
            "tipped",
            vec![ModelPart {
                primitive: Primitive::Cylinder { radius: 2.0, height: 40.0 },
                // Lying along +x after a 90-degree pitch.
                pose: RigidTransform::rotation_y(std::f64::consts::FRAC_PI_2),
                op: CombineOp::Union,
            }],
        )
        .unwrap();
        let (lo, hi) = model.bbox();
        assert!(hi.x >= 39.9, "rotated cylinder should extend along +x, got {hi:?}");
        assert!(lo.z <= -1.9 && hi.z >= 1.9);
    }
}
