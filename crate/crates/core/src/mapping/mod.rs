//! Global tactile maps: kinematic chain, map construction over a grasp plan,
//! cloud merging, primitive fitting, and persistence.

mod fit;
mod persist;

pub use fit::{fit_primitive_params, FitResult, PrimitiveKind};
pub use persist::{load_map, save_map, MAP_FORMAT_VERSION, MAP_MAGIC};

use nalgebra::Vector3;

use crate::descriptor::{compute_descriptor, rank_candidates, Descriptor};
use crate::geometry::{
    apply_transform, heightmap_to_pointcloud, Heightmap, PointCloud, RigidTransform,
    SensorIntrinsics, TactileImage,
};
use crate::local_shape::{estimate_local_shape, heightmap_rmse, PhotometricCalibration};
use crate::sensor_sim::{render_tactile_image, simulate_contact, GraspPose, ObjectModel, PhotometricModel};
use crate::util::derive_seed;
use crate::{Error, Result};

/// One stored imprint: what was sensed, where the sensor was, and the
/// derived retrieval features.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileMapEntry {
    pub image: TactileImage,
    pub heightmap: Heightmap,
    pub descriptor: Descriptor,
    pub sensor_pose_world: RigidTransform,
    pub gripper_opening: f64,
    pub local_cloud_sensor_frame: PointCloud,
}

impl TactileMapEntry {
    /// Builds an entry, deriving the descriptor and sensor-frame cloud.
    /// The heightmap must have contact (maps never store empty imprints).
    pub fn new(
        image: TactileImage,
        heightmap: Heightmap,
        sensor_pose_world: RigidTransform,
        gripper_opening: f64,
        intrinsics: &SensorIntrinsics,
    ) -> Result<Self> {
        if gripper_opening < 0.0 || !gripper_opening.is_finite() {
            return Err(Error::Usage(format!(
                "gripper opening {gripper_opening} must be finite and non-negative"
            )));
        }
        let descriptor = compute_descriptor(&image, &heightmap)?;
        let local_cloud_sensor_frame = heightmap_to_pointcloud(&heightmap, intrinsics)?;
        if local_cloud_sensor_frame.is_empty() {
            return Err(Error::DegenerateGeometry(
                "map entry has an empty contact cloud".into(),
            ));
        }
        Ok(Self {
            image,
            heightmap,
            descriptor,
            sensor_pose_world,
            gripper_opening,
            local_cloud_sensor_frame,
        })
    }

    /// Entry cloud expressed in the world frame.
    pub fn world_cloud(&self) -> PointCloud {
        apply_transform(&self.local_cloud_sensor_frame, &self.sensor_pose_world)
    }
}

/// Global tactile map of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileMap {
    pub object_id: String,
    pub intrinsics: SensorIntrinsics,
    pub entries: Vec<TactileMapEntry>,
    pub format_version: u32,
}

impl TactileMap {
    pub fn new(
        object_id: impl Into<String>,
        intrinsics: SensorIntrinsics,
        entries: Vec<TactileMapEntry>,
    ) -> Result<Self> {
        intrinsics.validate()?;
        let object_id = object_id.into();
        if entries.is_empty() {
            return Err(Error::EmptyMap(format!(
                "map {object_id:?} needs at least one entry"
            )));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.heightmap.width() != intrinsics.width
                || e.heightmap.height() != intrinsics.height
            {
                return Err(Error::Usage(format!(
                    "entry {i} dimensions do not match map intrinsics"
                )));
            }
        }
        Ok(Self {
            object_id,
            intrinsics,
            entries,
            format_version: MAP_FORMAT_VERSION,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Ranks map entries against a query descriptor under the gripper-opening
    /// filter; see [`crate::descriptor::rank_candidates`]. Returns (entry
    /// index, cosine distance) pairs, best first; empty when nothing passes
    /// the filter.
    pub fn rank_by_similarity(
        &self,
        query: &Descriptor,
        query_opening: f64,
        opening_tol: f64,
    ) -> Result<Vec<(usize, f64)>> {
        rank_candidates(
            query,
            query_opening,
            self.entries
                .iter()
                .enumerate()
                .map(|(i, e)| (i, e.gripper_opening, &e.descriptor)),
            opening_tol,
        )
    }
}

/// Sensor pose from the gripper kinematic chain: the sensor rides a jaw
/// displaced by half the opening along the gripper's +x (closing) axis,
/// behind a fixed hand-to-sensor calibration.
pub fn sensor_pose_from_kinematics(
    gripper_pose_world: &RigidTransform,
    opening: f64,
    hand_sensor_calib: &RigidTransform,
) -> Result<RigidTransform> {
    if !(opening >= 0.0) {
        return Err(Error::Usage(format!(
            "gripper opening {opening} must be non-negative"
        )));
    }
    let jaw_offset = RigidTransform::from_translation(Vector3::new(opening / 2.0, 0.0, 0.0));
    Ok(gripper_pose_world
        .compose(&jaw_offset)
        .compose(hand_sensor_calib))
}

/// Everything `build_map` learned along the way.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub map: TactileMap,
    /// Grasps whose simulated contact was empty.
    pub skipped_no_contact: usize,
    /// Grasps whose photometric estimate found no contact.
    pub skipped_no_estimate: usize,
    /// Per-entry RMSE between the estimated and simulated heightmaps, mm.
    pub estimation_rmse_mm: Vec<f64>,
}

/// Executes a grasp plan: simulate the contact, render the tactile image,
/// invert it back to a heightmap, and collect the entries into a map.
///
/// Stored heightmaps are the photometric estimates, exactly what a real
/// sensor pipeline would have; the simulated ground truth only feeds the
/// report's per-entry RMSE. Rendering noise is seeded per entry from
/// `noise_seed`, so rebuilds are bit-identical.
pub fn build_map_report(
    model: &ObjectModel,
    plan: &[GraspPose],
    cal: &PhotometricCalibration,
    intrinsics: &SensorIntrinsics,
    pm: &PhotometricModel,
    noise_seed: u64,
) -> Result<BuildReport> {
    if plan.is_empty() {
        return Err(Error::Usage("grasp plan is empty".into()));
    }
    let mut entries = Vec::new();
    let mut skipped_no_contact = 0;
    let mut skipped_no_estimate = 0;
    let mut estimation_rmse_mm = Vec::new();
    for (i, grasp) in plan.iter().enumerate() {
        let simulated = simulate_contact(model, grasp, intrinsics)?;
        if simulated.is_empty_contact() {
            skipped_no_contact += 1;
            continue;
        }
        let image = render_tactile_image(&simulated, pm, derive_seed(noise_seed, i as u64))?;
        let estimated = estimate_local_shape(&image, cal)?;
        if estimated.is_empty_contact() {
            skipped_no_estimate += 1;
            continue;
        }
        estimation_rmse_mm.push(heightmap_rmse(&estimated, &simulated)?);
        entries.push(TactileMapEntry::new(
            image,
            estimated,
            grasp.sensor_pose,
            grasp.gripper_opening,
            intrinsics,
        )?);
    }
    if entries.is_empty() {
        return Err(Error::EmptyMap(format!(
            "no grasp in the {}-pose plan produced contact on {:?}",
            plan.len(),
            model.name
        )));
    }
    let map = TactileMap::new(model.name.clone(), intrinsics.clone(), entries)?;
    Ok(BuildReport {
        map,
        skipped_no_contact,
        skipped_no_estimate,
        estimation_rmse_mm,
    })
}

/// [`build_map_report`] without the report.
pub fn build_map(
    model: &ObjectModel,
    plan: &[GraspPose],
    cal: &PhotometricCalibration,
    intrinsics: &SensorIntrinsics,
    pm: &PhotometricModel,
    noise_seed: u64,
) -> Result<TactileMap> {
    Ok(build_map_report(model, plan, cal, intrinsics, pm, noise_seed)?.map)
}

/// Stitches every entry's cloud into the world frame, in entry order.
/// Point count is the sum of the entry cloud sizes.
pub fn merge_clouds(map: &TactileMap) -> Result<PointCloud> {
    if map.is_empty() {
        return Err(Error::EmptyMap(format!(
            "cannot merge clouds of empty map {:?}",
            map.object_id
        )));
    }
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut have_normals = true;
    for entry in &map.entries {
        let world = entry.world_cloud();
        points.extend_from_slice(world.points());
        match world.normals() {
            Some(ns) => normals.extend_from_slice(ns),
            None => have_normals = false,
        }
    }
    if have_normals {
        PointCloud::with_normals(points, normals)
    } else {
        PointCloud::new(points)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use nalgebra::Vector3;

    use super::*;

    pub fn tiny_intrinsics() -> SensorIntrinsics {
        SensorIntrinsics {
            width: 12,
            height: 10,
            pixel_pitch: 0.5,
            gel_max_indentation: 2.0,
            sensor_frame: RigidTransform::identity(),
        }
    }

    /// Entry holding a parabolic bump centered at pixel (cx, cy), with image
    /// channels derived from the depths so distinct bumps rank apart.
    pub fn bump_entry(
        cx: f64,
        cy: f64,
        r0: f64,
        d0: f64,
        pose: RigidTransform,
        opening: f64,
    ) -> TactileMapEntry {
        let intr = tiny_intrinsics();
        let (w, h) = (intr.width, intr.height);
        let mut depths = vec![0.0f32; w * h];
        let mut mask = vec![false; w * h];
        let mut channels: [Vec<f32>; 3] = std::array::from_fn(|_| vec![0.0f32; w * h]);
        for r in 0..h {
            for c in 0..w {
                let dx = (c as f64 - cx) * intr.pixel_pitch;
                let dy = (r as f64 - cy) * intr.pixel_pitch;
                let d = d0 - (dx * dx + dy * dy) / (2.0 * r0);
                let i = r * w + c;
                if d > 1e-9 {
                    depths[i] = d as f32;
                    mask[i] = true;
                }
                channels[0][i] = 0.3 + 0.3 * depths[i];
                channels[1][i] = 0.4 + 0.1 * (dx.abs().min(1.0) as f32);
                channels[2][i] = 0.35 + 0.2 * depths[i];
            }
        }
        let hm = Heightmap::new(w, h, intr.pixel_pitch, intr.gel_max_indentation, depths, mask)
            .unwrap();
        let img = TactileImage::new(w, h, channels).unwrap();
        TactileMapEntry::new(img, hm, pose, opening, &intr).unwrap()
    }

    /// Three distinct imprints at three distinct world poses and openings.
    pub fn three_bump_map() -> TactileMap {
        let poses = [
            RigidTransform::from_translation(Vector3::new(10.0, 0.0, 0.0)),
            RigidTransform::rotation_z(0.7)
                .compose(&RigidTransform::from_translation(Vector3::new(-4.0, 8.0, 2.0))),
            RigidTransform::rotation_x(0.4)
                .compose(&RigidTransform::from_translation(Vector3::new(0.0, -6.0, 5.0))),
        ];
        let entries = vec![
            bump_entry(4.0, 4.0, 2.0, 1.2, poses[0], 31.0),
            bump_entry(7.0, 5.0, 4.0, 1.5, poses[1], 32.0),
            bump_entry(5.5, 3.0, 3.0, 0.9, poses[2], 33.0),
        ];
        TactileMap::new("tri", tiny_intrinsics(), entries).unwrap()
    }
}
