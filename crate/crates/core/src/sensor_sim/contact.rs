use nalgebra::Vector3;

use crate::geometry::{Heightmap, RigidTransform, SensorIntrinsics};
use crate::sensor_sim::sdf::{raycast, ObjectModel};
use crate::Result;

/// One grasp of the gripper: where the sensor sits and how far the jaws are
/// apart (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct GraspPose {
    /// Sensor frame in world coordinates; image x right, image y down,
    /// z pointing out of the gel toward the object.
    pub sensor_pose: RigidTransform,
    pub gripper_opening: f64,
}

/// Simulates pressing the gel against the object at a given sensor pose.
///
/// For every pixel a ray is cast along sensor +z from the deepest reachable
/// gel position (z = -max indentation) toward the rest plane (z = 0). The
/// depth is how far the first object surface lies below the rest plane,
/// clamped to the gel's maximum indentation. Pixels whose ray never meets the
/// object within that range stay at zero depth and unmasked.
pub fn simulate_contact(
    model: &ObjectModel,
    grasp: &GraspPose,
    intrinsics: &SensorIntrinsics,
) -> Result<Heightmap> {
    intrinsics.validate()?;
    let sensor_in_world = grasp.sensor_pose.compose(&intrinsics.sensor_frame);
    let view = model.view(&sensor_in_world);
    let (w, h) = (intrinsics.width, intrinsics.height);
    let pitch = intrinsics.pixel_pitch;
    let max_ind = intrinsics.gel_max_indentation;
    let mut depths = vec![0.0f32; w * h];
    let mut mask = vec![false; w * h];
    let up = Vector3::new(0.0, 0.0, 1.0);
    for r in 0..h {
        for c in 0..w {
            let origin = Vector3::new(c as f64 * pitch, r as f64 * pitch, -max_ind);
            if let Some(t) = raycast(&view, origin, up, max_ind) {
                let depth = ((max_ind - t).clamp(0.0, max_ind)) as f32;
                if depth > 0.0 {
                    let i = r * w + c;
                    depths[i] = depth;
                    mask[i] = true;
                }
            }
        }
    }
    Heightmap::new(w, h, pitch, max_ind, depths, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor_sim::sdf::{CombineOp, ModelPart, Primitive};
    use nalgebra::Matrix3;

    fn small_intrinsics() -> SensorIntrinsics {
        SensorIntrinsics {
            width: 32,
            height: 24,
            pixel_pitch: 0.3,
            gel_max_indentation: 2.0,
            sensor_frame: RigidTransform::identity(),
        }
    }

    fn sphere_model(radius: f64) -> ObjectModel {
        ObjectModel::new(
            "ball",
            vec![ModelPart {
                primitive: Primitive::Sphere { radius },
                pose: RigidTransform::identity(),
                op: CombineOp::Union,
            }],
        )
        .unwrap()
    }

    fn box_model() -> ObjectModel {
        ObjectModel::new(
            "slab",
            vec![ModelPart {
                primitive: Primitive::Cuboid { size_x: 25.0, size_y: 20.0, size_z: 80.0 },
                pose: RigidTransform::identity(),
                op: CombineOp::Union,
            }],
        )
        .unwrap()
    }

    /// Sensor looking straight down at the sphere's pole, rest plane pressed
    /// `press` into the top.
    fn top_down_grasp(intr: &SensorIntrinsics, radius: f64, press: f64) -> GraspPose {
        let cx = (intr.width - 1) as f64 / 2.0 * intr.pixel_pitch;
        let cy = (intr.height - 1) as f64 / 2.0 * intr.pixel_pitch;
        let pose = RigidTransform::from_translation(Vector3::new(-cx, cy, radius - press))
            .compose(&RigidTransform::rotation_x(std::f64::consts::PI));
        GraspPose { sensor_pose: pose, gripper_opening: 40.0 }
    }

    #[test]
    fn sphere_cap_depths_match_closed_form() {
        let intr = small_intrinsics();
        let (radius, press) = (10.0, 0.8);
        let model = sphere_model(radius);
        let grasp = top_down_grasp(&intr, radius, press);
        let hm = simulate_contact(&model, &grasp, &intr).unwrap();
        assert!(hm.contact_count() > 100, "cap should cover many pixels");
        let cx = (intr.width - 1) as f64 / 2.0 * intr.pixel_pitch;
        let cy = (intr.height - 1) as f64 / 2.0 * intr.pixel_pitch;
        for r in 0..intr.height {
            for c in 0..intr.width {
                let wx = c as f64 * intr.pixel_pitch - cx;
                let wy = cy - r as f64 * intr.pixel_pitch;
                let rho2 = wx * wx + wy * wy;
                let expected = if rho2 < radius * radius {
                    ((radius * radius - rho2).sqrt() - radius + press).max(0.0)
                } else {
                    0.0
                };
                if expected.abs() < 1e-5 {
                    continue; // rim pixel, either outcome is fair
                }
                assert!(
                    (hm.depth(r, c) - expected).abs() < 1e-6,
                    "pixel ({r},{c}): got {}, want {expected}",
                    hm.depth(r, c)
                );
                assert_eq!(hm.masked(r, c), expected > 0.0);
            }
        }
    }

    /// Sensor facing the +x wall of the box, window well inside the face.
    fn side_grasp_on_box(press: f64) -> GraspPose {
        let rot = Matrix3::from_columns(&[
            Vector3::new(0.0, 1.0, 0.0),  // image x along world +y
            Vector3::new(0.0, 0.0, -1.0), // image y down
            Vector3::new(-1.0, 0.0, 0.0), // optical axis into the face
        ]);
        // Gel rest plane at world x = 12.5 - press; window centred near the
        // middle of the face.
        let translation = Vector3::new(12.5 - press, -4.75, 43.5);
        GraspPose {
            sensor_pose: RigidTransform::new(rot, translation).unwrap(),
            gripper_opening: 25.0 - 2.0 * press,
        }
    }

    #[test]
    fn flat_face_presses_uniformly() {
        let intr = small_intrinsics();
        let press = 1.25;
        let hm = simulate_contact(&box_model(), &side_grasp_on_box(press), &intr).unwrap();
        assert_eq!(hm.contact_count(), intr.width * intr.height);
        for &d in hm.depths() {
            assert!((d as f64 - press).abs() < 1e-6, "depth {d} != press {press}");
        }
    }

    #[test]
    fn no_contact_beyond_the_gel_range() {
        let intr = small_intrinsics();
        let mut grasp = side_grasp_on_box(1.25);
        // Pull the sensor 5mm away from the face: rest plane no longer reached.
        grasp.sensor_pose = RigidTransform::from_translation(Vector3::new(5.0, 0.0, 0.0))
            .compose(&grasp.sensor_pose);
        let hm = simulate_contact(&box_model(), &grasp, &intr).unwrap();
        assert_eq!(hm.contact_count(), 0);
    }

    #[test]
    fn full_compression_clamps_to_max_indentation() {
        let intr = small_intrinsics();
        let mut grasp = side_grasp_on_box(1.25);
        // Push 5mm further in: the whole window saturates.
        grasp.sensor_pose = RigidTransform::from_translation(Vector3::new(-5.0, 0.0, 0.0))
            .compose(&grasp.sensor_pose);
        let hm = simulate_contact(&box_model(), &grasp, &intr).unwrap();
        for &d in hm.depths() {
            assert_eq!(d as f64, intr.gel_max_indentation);
        }
    }

    /// Moving object and gripper by the same world motion must not change
    /// the imprint. With exactly-representable translations and an identity
    /// scene rotation the heightmaps agree bit for bit.
    #[test]
    fn pure_translation_equivariance_is_bitwise() {
        let intr = small_intrinsics();
        let model = box_model();
        let grasp = side_grasp_on_box(1.25);
        let w = RigidTransform::from_translation(Vector3::new(1.25, -0.5, 2.25));
        let moved_model = ObjectModel::new(
            "slab-moved",
            model
                .parts
                .iter()
                .map(|p| ModelPart {
                    primitive: p.primitive,
                    pose: w.compose(&p.pose),
                    op: p.op,
                })
                .collect(),
        )
        .unwrap();
        let moved_grasp = GraspPose {
            sensor_pose: w.compose(&grasp.sensor_pose),
            gripper_opening: grasp.gripper_opening,
        };
        let a = simulate_contact(&model, &grasp, &intr).unwrap();
        let b = simulate_contact(&moved_model, &moved_grasp, &intr).unwrap();
        assert_eq!(a.mask(), b.mask());
        let bits_a: Vec<u32> = a.depths().iter().map(|d| d.to_bits()).collect();
        let bits_b: Vec<u32> = b.depths().iter().map(|d| d.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn general_rigid_equivariance_within_tolerance() {
        let intr = small_intrinsics();
        let (radius, press) = (10.0, 0.8);
        let model = sphere_model(radius);
        let grasp = top_down_grasp(&intr, radius, press);
        let w = RigidTransform::rotation_z(0.7)
            .compose(&RigidTransform::rotation_x(-0.3))
            .compose(&RigidTransform::from_translation(Vector3::new(3.1, -2.2, 1.7)));
        let moved_model = ObjectModel::new(
            "ball-moved",
            model
                .parts
                .iter()
                .map(|p| ModelPart {
                    primitive: p.primitive,
                    pose: w.compose(&p.pose),
                    op: p.op,
                })
                .collect(),
        )
        .unwrap();
        let moved_grasp = GraspPose {
            sensor_pose: w.compose(&grasp.sensor_pose),
            gripper_opening: grasp.gripper_opening,
        };
        let a = simulate_contact(&model, &grasp, &intr).unwrap();
        let b = simulate_contact(&moved_model, &moved_grasp, &intr).unwrap();
        assert_eq!(a.mask(), b.mask());
        for (da, db) in a.depths().iter().zip(b.depths()) {
            assert!((da - db).abs() < 1e-6);
        }
    }
}
