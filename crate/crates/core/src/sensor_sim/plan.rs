use nalgebra::{Matrix3, Vector3};

use crate::geometry::{RigidTransform, SensorIntrinsics};
use crate::sensor_sim::contact::{simulate_contact, GraspPose};
use crate::sensor_sim::sdf::{raycast, ObjectModel};
use crate::{Error, Result};

/// Grasp-grid planner configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanParams {
    /// Grid pitch along each side face, mm.
    pub spacing: f64,
    /// Approach yaw offsets about the vertical axis, degrees.
    pub yaw_angles_deg: Vec<f64>,
    /// How deep the first-contact point is pressed into the gel, mm.
    pub press_depth: f64,
    /// Candidates whose simulated contact has fewer pixels are discarded.
    pub min_contact_pixels: usize,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            spacing: 10.0,
            yaw_angles_deg: vec![0.0, 20.0, -20.0],
            press_depth: 1.5,
            min_contact_pixels: 1,
        }
    }
}

impl PlanParams {
    pub fn validate(&self, intrinsics: &SensorIntrinsics) -> Result<()> {
        if !(self.spacing > 0.0) {
            return Err(Error::Usage("grid spacing must be positive".into()));
        }
        if self.yaw_angles_deg.is_empty() {
            return Err(Error::Usage("need at least one yaw angle".into()));
        }
        if !(self.press_depth > 0.0) || self.press_depth >= intrinsics.gel_max_indentation {
            return Err(Error::Usage(format!(
                "press depth {} must be in (0, {})",
                self.press_depth, intrinsics.gel_max_indentation
            )));
        }
        Ok(())
    }
}

/// Jaw opening for a measured object thickness with both gel pads pressed in
/// by `press_depth`.
pub fn default_opening(press_depth: f64) -> impl Fn(f64) -> f64 {
    move |thickness: f64| (thickness - 2.0 * press_depth).max(0.0)
}

/// Plans the side-grasp grid used to build tactile maps.
///
/// Horizontal approach rays are laid out on a `spacing`-pitched grid over the
/// four vertical faces of the object's bounding box, each repeated at every
/// yaw offset (rotation about the vertical axis through the grid point). A
/// ray that misses the object is dropped; otherwise the sensor closes until
/// the first point of contact anywhere on the pad is pressed in by
/// `press_depth`, with image y pointing down in the world. The jaw opening
/// comes from `opening_fn` applied to the object's thickness along the grasp
/// axis as the jaw encoder would measure it. Candidates whose simulated
/// contact is empty are discarded. Order is deterministic: faces
/// +x, -x, +y, -y; rows bottom to top; columns low to high; yaws in the
/// given order.
pub fn plan_grasp_grid(
    model: &ObjectModel,
    intrinsics: &SensorIntrinsics,
    params: &PlanParams,
    opening_fn: impl Fn(f64) -> f64,
) -> Result<Vec<GraspPose>> {
    intrinsics.validate()?;
    params.validate(intrinsics)?;
    let candidates = plan_grasp_candidates(model, intrinsics, params, opening_fn)?;
    let mut retained = Vec::with_capacity(candidates.len());
    for grasp in candidates {
        let hm = simulate_contact(model, &grasp, intrinsics)?;
        if hm.contact_count() >= params.min_contact_pixels.max(1) {
            retained.push(grasp);
        }
    }
    Ok(retained)
}

/// The unfiltered candidate list behind [`plan_grasp_grid`]: every grid ray
/// that hits the object, before contact simulation weeds out empty imprints.
pub fn plan_grasp_candidates(
    model: &ObjectModel,
    intrinsics: &SensorIntrinsics,
    params: &PlanParams,
    opening_fn: impl Fn(f64) -> f64,
) -> Result<Vec<GraspPose>> {
    intrinsics.validate()?;
    params.validate(intrinsics)?;
    let (lo, hi) = model.bbox();
    if !(lo.x.is_finite() && hi.x.is_finite()) {
        return Err(Error::DegenerateGeometry("model has no union parts".into()));
    }
    let standoff = (hi - lo).norm() + 10.0;
    let view = model.view(&RigidTransform::identity());
    let (cx, cy) = (
        intrinsics.width as f64 * intrinsics.pixel_pitch / 2.0,
        intrinsics.height as f64 * intrinsics.pixel_pitch / 2.0,
    );

    let grid_coords = |a: f64, b: f64| {
        let mut v = Vec::new();
        let mut x = a;
        while x <= b + 1e-9 {
            v.push(x);
            x += params.spacing;
        }
        v
    };

    // (outward normal, axis holding the face coordinate, axis swept by u)
    let faces = [
        (Vector3::new(1.0, 0.0, 0.0), 0usize, 1usize),
        (Vector3::new(-1.0, 0.0, 0.0), 0, 1),
        (Vector3::new(0.0, 1.0, 0.0), 1, 0),
        (Vector3::new(0.0, -1.0, 0.0), 1, 0),
    ];

    let mut grasps = Vec::new();
    for (normal, face_axis, u_axis) in faces {
        let face_coord = if normal[face_axis] > 0.0 {
            hi[face_axis]
        } else {
            lo[face_axis]
        };
        for v in grid_coords(lo.z, hi.z) {
            for u in grid_coords(lo[u_axis], hi[u_axis]) {
                for &yaw in &params.yaw_angles_deg {
                    let mut q = Vector3::zeros();
                    q[face_axis] = face_coord;
                    q[u_axis] = u;
                    q.z = v;
                    let dir = RigidTransform::rotation_z(yaw.to_radians()).rotate(-normal);
                    let origin = q - dir * standoff;
                    let Some(t_hit) = raycast(&view, origin, dir, 2.0 * standoff) else {
                        continue;
                    };
                    let hit = origin + dir * t_hit;
                    // Probe the far side for the object's thickness along the
                    // grasp axis.
                    let far_origin = hit + dir * (2.0 * standoff);
                    let thickness = raycast(&view, far_origin, -dir, 2.0 * standoff - 1e-6)
                        .map(|t_back| (2.0 * standoff - t_back).max(0.0))
                        .unwrap_or(0.0);
                    let center = hit + dir * params.press_depth;
                    let z_s = dir;
                    let y_s = Vector3::new(0.0, 0.0, -1.0);
                    let x_s = y_s.cross(&z_s);
                    let rot = Matrix3::from_columns(&[x_s, y_s, z_s]);
                    let translation = center - rot * Vector3::new(cx, cy, 0.0);
                    let tentative = RigidTransform::new(rot, translation)?;
                    // A bulge off the targeted ray may touch the pad first;
                    // the jaw stops there, so back the sensor off until the
                    // deepest window point is pressed by exactly the
                    // requested depth.
                    let deepest = window_penetration(model, &tentative, intrinsics, standoff);
                    let retract = (deepest - params.press_depth).max(0.0);
                    // Both jaws stop the same way, so the encoder reads the
                    // ray thickness plus both retractions.
                    let opening = opening_fn(thickness + 2.0 * retract);
                    if !opening.is_finite() || opening < 0.0 {
                        return Err(Error::Usage(format!(
                            "opening function returned {opening} for thickness {thickness}"
                        )));
                    }
                    grasps.push(GraspPose {
                        sensor_pose: RigidTransform::new(rot, translation - dir * retract)?,
                        gripper_opening: opening,
                    });
                }
            }
        }
    }
    Ok(grasps)
}

/// Deepest unclamped penetration of the object below the gel rest plane over
/// the whole sensor window, in mm. Rays start `reach` behind the deepest gel
/// position so bulges taller than the gel range are still measured; a ray
/// whose start is already inside the object reports the full cast length,
/// which makes colliding candidates retract clear of the object.
fn window_penetration(
    model: &ObjectModel,
    sensor_pose: &RigidTransform,
    intrinsics: &SensorIntrinsics,
    reach: f64,
) -> f64 {
    let sensor_in_world = sensor_pose.compose(&intrinsics.sensor_frame);
    let view = model.view(&sensor_in_world);
    let up = Vector3::new(0.0, 0.0, 1.0);
    let start = intrinsics.gel_max_indentation + reach;
    let mut deepest = 0.0f64;
    for r in 0..intrinsics.height {
        for c in 0..intrinsics.width {
            let origin = Vector3::new(
                c as f64 * intrinsics.pixel_pitch,
                r as f64 * intrinsics.pixel_pitch,
                -start,
            );
            if let Some(t) = raycast(&view, origin, up, start) {
                deepest = deepest.max(start - t);
            }
        }
    }
    deepest
}
