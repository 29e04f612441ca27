//! Localization of a single tactile imprint against a tactile map, plus the
//! evaluation protocols built on top of it (leave-one-out, map-fraction
//! study, error histograms) and multi-object identification.
//!
//! Three methods are implemented:
//!
//! * `RANDOM` picks a uniformly random map entry's pose. It is the baseline
//!   every informed method has to beat.
//! * `CTI` (closest tactile imprint) adopts the pose of the most similar
//!   map entry by descriptor cosine distance, after filtering candidates to
//!   a compatible gripper opening.
//! * `CTI-ICP-N` refines the CTI pose with point-to-point ICP of the query
//!   cloud against an auxiliary cloud merged from the world-frame clouds of
//!   the top-N ranked entries.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::descriptor::{compute_descriptor, rank_candidates, Descriptor};
use crate::geometry::{
    apply_transform, corresponded_rmse, heightmap_to_pointcloud, voxel_downsample, Heightmap,
    PointCloud, RigidTransform, SensorIntrinsics, TactileImage,
};
use crate::local_shape::{estimate_local_shape, PhotometricCalibration};
use crate::mapping::{TactileMap, TactileMapEntry};
use crate::registration::{icp_with_index, IcpParams, IcpResult, NNIndex};
use crate::sensor_sim::{render_tactile_image, simulate_contact, GraspPose, ObjectModel,
    PhotometricModel};
use crate::util::{derive_seed, median};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Random,
    Cti,
    CtiIcp { n: usize },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Random => "RANDOM".into(),
            Method::Cti => "CTI".into(),
            Method::CtiIcp { n } => format!("CTI-ICP-{n}"),
        }
    }

    /// Auxiliary-cloud size, zero for methods without refinement. Used in
    /// result files ("N" column).
    pub fn n(&self) -> usize {
        match self {
            Method::CtiIcp { n } => *n,
            _ => 0,
        }
    }

    /// Accepts "random", "cti" and "cti-icp-N" (case-insensitive,
    /// underscores allowed).
    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "random" => Ok(Method::Random),
            "cti" => Ok(Method::Cti),
            other => {
                if let Some(rest) = other.strip_prefix("cti-icp-") {
                    let n: usize = rest
                        .parse()
                        .map_err(|_| Error::Usage(format!("bad method {s:?}")))?;
                    if n == 0 {
                        return Err(Error::Usage("cti-icp needs n >= 1".into()));
                    }
                    Ok(Method::CtiIcp { n })
                } else {
                    Err(Error::Usage(format!(
                        "unknown method {s:?} (random, cti, cti-icp-N)"
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalizeParams {
    /// Gripper-opening gate for candidate ranking, mm.
    pub opening_tol: f64,
    pub icp: IcpParams,
    /// Voxel size for downsampling the query and auxiliary clouds before
    /// ICP; None runs on the full clouds.
    pub downsample_voxel: Option<f64>,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        Self {
            opening_tol: 2.0,
            icp: IcpParams::default(),
            downsample_voxel: Some(0.5),
        }
    }
}

/// A borrowed subset of a map's entries. Evaluation protocols localize
/// against reduced maps; the view keeps the original entry indices so
/// results stay comparable across views.
#[derive(Debug, Clone)]
pub struct MapView<'a> {
    map: &'a TactileMap,
    indices: Vec<usize>,
}

impl<'a> MapView<'a> {
    pub fn full(map: &'a TactileMap) -> Self {
        Self {
            map,
            indices: (0..map.len()).collect(),
        }
    }

    pub fn excluding(map: &'a TactileMap, skip: usize) -> Self {
        Self {
            map,
            indices: (0..map.len()).filter(|&i| i != skip).collect(),
        }
    }

    pub fn from_indices(map: &'a TactileMap, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyMap("map view with no entries".into()));
        }
        let mut seen = vec![false; map.len()];
        for &i in &indices {
            if i >= map.len() {
                return Err(Error::Usage(format!(
                    "view index {i} out of range for a {}-entry map",
                    map.len()
                )));
            }
            if seen[i] {
                return Err(Error::Usage(format!("duplicate view index {i}")));
            }
            seen[i] = true;
        }
        Ok(Self { map, indices })
    }

    pub fn map(&self) -> &'a TactileMap {
        self.map
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Original map indices of the entries in this view.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn entry(&self, map_index: usize) -> &'a TactileMapEntry {
        &self.map.entries[map_index]
    }

    /// Ranks the view's entries for the query, best first, as (original map
    /// index, cosine distance). The opening filter widens once (doubled
    /// tolerance) and then drops away entirely before giving up, so a query
    /// only fails to rank against an empty view.
    pub fn rank(
        &self,
        query: &Descriptor,
        query_opening: f64,
        opening_tol: f64,
    ) -> Result<Vec<(usize, f64)>> {
        let candidates = || {
            self.indices
                .iter()
                .map(|&i| (i, self.map.entries[i].gripper_opening, &self.map.entries[i].descriptor))
        };
        let ranked = rank_candidates(query, query_opening, candidates(), opening_tol)?;
        if !ranked.is_empty() {
            return Ok(ranked);
        }
        let ranked = rank_candidates(query, query_opening, candidates(), opening_tol * 2.0)?;
        if !ranked.is_empty() {
            return Ok(ranked);
        }
        let ranked = rank_candidates(query, query_opening, candidates(), f64::INFINITY)?;
        if ranked.is_empty() {
            return Err(Error::NoMatch(format!(
                "no candidate entries in map {:?}",
                self.map.object_id
            )));
        }
        Ok(ranked)
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationQuery {
    pub image: TactileImage,
    pub heightmap: Heightmap,
    pub descriptor: Descriptor,
    pub gripper_opening: f64,
    /// Contact cloud in the sensor frame.
    pub local_cloud: PointCloud,
}

impl LocalizationQuery {
    pub fn new(
        image: TactileImage,
        heightmap: Heightmap,
        gripper_opening: f64,
        intrinsics: &SensorIntrinsics,
    ) -> Result<Self> {
        if gripper_opening < 0.0 || !gripper_opening.is_finite() {
            return Err(Error::Usage(format!(
                "gripper opening {gripper_opening} must be finite and non-negative"
            )));
        }
        let descriptor = compute_descriptor(&image, &heightmap)?;
        let local_cloud = heightmap_to_pointcloud(&heightmap, intrinsics)?;
        if local_cloud.is_empty() {
            return Err(Error::DegenerateGeometry(
                "query imprint has no contact".into(),
            ));
        }
        Ok(Self {
            image,
            heightmap,
            descriptor,
            gripper_opening,
            local_cloud,
        })
    }

    /// Reuses a map entry's already-derived fields, for leave-one-out runs.
    pub fn from_entry(entry: &TactileMapEntry) -> Self {
        Self {
            image: entry.image.clone(),
            heightmap: entry.heightmap.clone(),
            descriptor: entry.descriptor.clone(),
            gripper_opening: entry.gripper_opening,
            local_cloud: entry.local_cloud_sensor_frame.clone(),
        }
    }

    /// Simulates a fresh imprint of `model` at `grasp` and runs it through
    /// the estimation pipeline, exactly as a map-building touch would be.
    /// Returns Ok(None) when the grasp makes no contact (either in the
    /// simulated heightmap or after mask extraction).
    pub fn from_simulation(
        model: &ObjectModel,
        grasp: &GraspPose,
        intrinsics: &SensorIntrinsics,
        photometric: &PhotometricModel,
        calibration: &PhotometricCalibration,
        noise_seed: u64,
    ) -> Result<Option<Self>> {
        let simulated = simulate_contact(model, grasp, intrinsics)?;
        if simulated.contact_count() == 0 {
            return Ok(None);
        }
        let image = render_tactile_image(&simulated, photometric, noise_seed)?;
        let estimated = estimate_local_shape(&image, calibration)?;
        if estimated.contact_count() == 0 {
            return Ok(None);
        }
        Ok(Some(Self::new(
            image,
            estimated,
            grasp.gripper_opening,
            intrinsics,
        )?))
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub method: Method,
    /// Estimated sensor pose in the world (object) frame.
    pub sensor_pose_world: RigidTransform,
    /// Original map index of the matched entry (for RANDOM, the drawn one).
    pub matched_entry: usize,
    /// Cosine distance to the matched entry; None for RANDOM.
    pub descriptor_distance: Option<f64>,
    pub icp_diag: Option<IcpResult>,
    /// Filled by evaluation protocols that know the true pose.
    pub rmse_vs_truth: Option<f64>,
}

/// Corresponded RMSE between the same cloud placed at two poses. This is
/// the localization error metric: how far the relocated imprint sits from
/// where it truly was.
pub fn pose_rmse(cloud: &PointCloud, estimated: &RigidTransform, truth: &RigidTransform) -> Result<f64> {
    corresponded_rmse(
        &apply_transform(cloud, estimated),
        &apply_transform(cloud, truth),
    )
}

pub fn localize_random(view: &MapView, seed: u64) -> Result<LocalizationResult> {
    if view.is_empty() {
        return Err(Error::Usage("cannot localize against an empty view".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = view.indices()[rng.random_range(0..view.len())];
    Ok(LocalizationResult {
        method: Method::Random,
        sensor_pose_world: view.entry(pick).sensor_pose_world,
        matched_entry: pick,
        descriptor_distance: None,
        icp_diag: None,
        rmse_vs_truth: None,
    })
}

pub fn localize_cti(
    query: &LocalizationQuery,
    view: &MapView,
    params: &LocalizeParams,
) -> Result<LocalizationResult> {
    let ranked = view.rank(&query.descriptor, query.gripper_opening, params.opening_tol)?;
    let (best, dist) = ranked[0];
    Ok(LocalizationResult {
        method: Method::Cti,
        sensor_pose_world: view.entry(best).sensor_pose_world,
        matched_entry: best,
        descriptor_distance: Some(dist),
        icp_diag: None,
        rmse_vs_truth: None,
    })
}

pub fn localize_cti_icp(
    query: &LocalizationQuery,
    view: &MapView,
    n: usize,
    params: &LocalizeParams,
) -> Result<LocalizationResult> {
    if n == 0 {
        return Err(Error::Usage("cti-icp needs n >= 1".into()));
    }
    let ranked = view.rank(&query.descriptor, query.gripper_opening, params.opening_tol)?;
    let (best, dist) = ranked[0];
    let init = view.entry(best).sensor_pose_world;

    let mut aux_points = Vec::new();
    for &(idx, _) in ranked.iter().take(n) {
        aux_points.extend_from_slice(view.entry(idx).world_cloud().points());
    }
    let aux = PointCloud::new(aux_points)?;
    let (src, aux) = match params.downsample_voxel {
        Some(v) => (
            voxel_downsample(&query.local_cloud, v)?,
            voxel_downsample(&aux, v)?,
        ),
        None => (query.local_cloud.clone(), aux),
    };

    let index = NNIndex::build(aux.points())?;
    let refined = match icp_with_index(&src, &aux, &index, &init, &params.icp) {
        Ok(icp) => icp,
        // No usable overlap or a degenerate correspondence set: fall back
        // to the unrefined CTI answer, flagged unconverged.
        Err(Error::IcpNoOverlap { iteration, inliers, min_inliers }) => IcpResult {
            transform: init,
            iterations: iteration,
            mean_correspondence_dist: f64::INFINITY,
            inlier_count: inliers.min(min_inliers),
            converged: false,
        },
        Err(Error::DegenerateGeometry(_)) => IcpResult {
            transform: init,
            iterations: 0,
            mean_correspondence_dist: f64::INFINITY,
            inlier_count: 0,
            converged: false,
        },
        Err(e) => return Err(e),
    };
    Ok(LocalizationResult {
        method: Method::CtiIcp { n },
        sensor_pose_world: refined.transform,
        matched_entry: best,
        descriptor_distance: Some(dist),
        icp_diag: Some(refined),
        rmse_vs_truth: None,
    })
}

/// Dispatches on `method`. RANDOM ignores the query content but still
/// requires one so that all methods share an evaluation harness.
pub fn localize(
    query: &LocalizationQuery,
    view: &MapView,
    method: Method,
    seed: u64,
    params: &LocalizeParams,
) -> Result<LocalizationResult> {
    match method {
        Method::Random => localize_random(view, seed),
        Method::Cti => localize_cti(query, view, params),
        Method::CtiIcp { n } => localize_cti_icp(query, view, n, params),
    }
}

#[derive(Debug, Clone)]
pub struct Identification {
    pub object_id: String,
    /// Index into the `maps` slice passed to [`identify`].
    pub map_index: usize,
    /// True when another object's best candidate tied exactly.
    pub ambiguous: bool,
    pub result: LocalizationResult,
}

/// Picks the object whose best-ranked entry is closest to the query in
/// descriptor space, then localizes within that object's map with
/// CTI-ICP-n. Ties keep the earliest map.
pub fn identify(
    query: &LocalizationQuery,
    maps: &[TactileMap],
    n: usize,
    params: &LocalizeParams,
) -> Result<Identification> {
    if maps.is_empty() {
        return Err(Error::Usage("identify needs at least one map".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut ambiguous = false;
    for (mi, map) in maps.iter().enumerate() {
        let view = MapView::full(map);
        let dist = match view.rank(&query.descriptor, query.gripper_opening, params.opening_tol) {
            Ok(ranked) => ranked[0].1,
            Err(Error::NoMatch(_)) => continue,
            Err(e) => return Err(e),
        };
        match best {
            None => best = Some((mi, dist)),
            Some((_, best_dist)) => {
                if dist == best_dist {
                    ambiguous = true;
                } else if dist < best_dist {
                    best = Some((mi, dist));
                    ambiguous = false;
                }
            }
        }
    }
    let Some((map_index, _)) = best else {
        return Err(Error::NoMatch("no map produced a ranking".into()));
    };
    let map = &maps[map_index];
    let result = localize_cti_icp(query, &MapView::full(map), n, params)?;
    Ok(Identification {
        object_id: map.object_id.clone(),
        map_index,
        ambiguous,
        result,
    })
}

/// One evaluated trial: a single query imprint localized against a reduced
/// map. `map_fraction` is 1.0 for plain leave-one-out.
#[derive(Debug, Clone)]
pub struct EvalTrial {
    pub entry_index: usize,
    pub map_fraction: f64,
    /// Seed recorded for reproducibility: the RANDOM draw seed, or the
    /// subset draw seed in fraction studies (0 for deterministic full-map
    /// CTI runs).
    pub seed: u64,
    pub rmse_mm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub method: Method,
    pub trials: Vec<EvalTrial>,
    pub median_rmse_mm: f64,
}

/// Removes each entry in turn, localizes it against the rest, and measures
/// the corresponded RMSE between the relocated cloud and its true place.
pub fn leave_one_out_eval(
    map: &TactileMap,
    method: Method,
    seed: u64,
    params: &LocalizeParams,
) -> Result<EvalOutcome> {
    if map.len() < 2 {
        return Err(Error::Usage(
            "leave-one-out needs a map with at least 2 entries".into(),
        ));
    }
    let mut trials = Vec::with_capacity(map.len());
    for i in 0..map.len() {
        let entry = &map.entries[i];
        let query = LocalizationQuery::from_entry(entry);
        let view = MapView::excluding(map, i);
        let trial_seed = derive_seed(seed, i as u64);
        let result = localize(&query, &view, method, trial_seed, params)?;
        let rmse = pose_rmse(
            &entry.local_cloud_sensor_frame,
            &result.sensor_pose_world,
            &entry.sensor_pose_world,
        )?;
        trials.push(EvalTrial {
            entry_index: i,
            map_fraction: 1.0,
            seed: match method {
                Method::Random => trial_seed,
                _ => 0,
            },
            rmse_mm: rmse,
            converged: result.icp_diag.as_ref().map_or(true, |d| d.converged),
        });
    }
    let median_rmse_mm = median(
        &trials.iter().map(|t| t.rmse_mm).collect::<Vec<_>>(),
    )
    .expect("at least 2 trials");
    Ok(EvalOutcome {
        method,
        trials,
        median_rmse_mm,
    })
}

/// Number of independent subset draws pooled per fraction below 1.0. More
/// draws smooth the small-subset medians at proportional cost.
pub const FRACTION_DRAWS: usize = 3;

#[derive(Debug, Clone)]
pub struct FractionPoint {
    pub fraction: f64,
    pub median_rmse_mm: f64,
    pub trial_count: usize,
}

#[derive(Debug, Clone)]
pub struct FractionStudy {
    pub method: Method,
    pub points: Vec<FractionPoint>,
    /// Every individual trial across fractions and draws, for CSV output.
    pub trials: Vec<EvalTrial>,
}

/// For each fraction, draws a uniformly random subset of the map of that
/// size and localizes every held-out entry against it; the per-fraction
/// median pools [`FRACTION_DRAWS`] independent draws. Fraction 1.0 has no
/// held-out complement and reduces to plain leave-one-out.
pub fn map_fraction_study(
    map: &TactileMap,
    fractions: &[f64],
    method: Method,
    seed: u64,
    params: &LocalizeParams,
) -> Result<FractionStudy> {
    if map.len() < 2 {
        return Err(Error::Usage(
            "fraction study needs a map with at least 2 entries".into(),
        ));
    }
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::Usage(format!(
                "fractions must lie in (0, 1], got {f}"
            )));
        }
    }
    let mut points = Vec::with_capacity(fractions.len());
    let mut all_trials = Vec::new();
    for (fi, &fraction) in fractions.iter().enumerate() {
        let mut errors = Vec::new();
        if fraction == 1.0 {
            let loo = leave_one_out_eval(map, method, derive_seed(seed, fi as u64), params)?;
            errors.extend(loo.trials.iter().map(|t| t.rmse_mm));
            all_trials.extend(loo.trials);
        } else {
            let keep = ((fraction * map.len() as f64).round() as usize).max(1);
            for draw in 0..FRACTION_DRAWS {
                let draw_seed = derive_seed(seed, ((fi as u64) << 8) | draw as u64);
                let subset = sample_indices(map.len(), keep, draw_seed);
                let view = MapView::from_indices(map, subset.clone())?;
                let mut in_subset = vec![false; map.len()];
                for &i in &subset {
                    in_subset[i] = true;
                }
                for i in (0..map.len()).filter(|&i| !in_subset[i]) {
                    let entry = &map.entries[i];
                    let query = LocalizationQuery::from_entry(entry);
                    let trial_seed = derive_seed(draw_seed, i as u64);
                    let result = localize(&query, &view, method, trial_seed, params)?;
                    let rmse = pose_rmse(
                        &entry.local_cloud_sensor_frame,
                        &result.sensor_pose_world,
                        &entry.sensor_pose_world,
                    )?;
                    errors.push(rmse);
                    all_trials.push(EvalTrial {
                        entry_index: i,
                        map_fraction: fraction,
                        seed: draw_seed,
                        rmse_mm: rmse,
                        converged: result.icp_diag.as_ref().map_or(true, |d| d.converged),
                    });
                }
            }
        }
        let med = median(&errors).ok_or_else(|| {
            Error::UndefinedMetric(format!("fraction {fraction} produced no trials"))
        })?;
        points.push(FractionPoint {
            fraction,
            median_rmse_mm: med,
            trial_count: errors.len(),
        });
    }
    Ok(FractionStudy {
        method,
        points,
        trials: all_trials,
    })
}

/// Uniform sample of `k` distinct indices from 0..n via a partial
/// Fisher-Yates shuffle; the result is sorted for deterministic iteration.
fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut picked = pool[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// Bin counts over [0, range] with `bin_width` spacing plus one trailing
/// overflow bin for errors beyond the range. Errors exactly at the range
/// boundary land in the last regular bin.
pub fn error_histogram(errors: &[f64], bin_width: f64, range: f64) -> Result<Vec<usize>> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::Usage(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    if !(range > 0.0) || !range.is_finite() {
        return Err(Error::Usage(format!("range must be positive, got {range}")));
    }
    let regular = (range / bin_width).ceil() as usize;
    let mut counts = vec![0usize; regular + 1];
    for &e in errors {
        if !(e >= 0.0) {
            return Err(Error::Usage(format!(
                "histogram errors must be non-negative, got {e}"
            )));
        }
        if e > range {
            counts[regular] += 1;
        } else {
            let idx = ((e / bin_width) as usize).min(regular - 1);
            counts[idx] += 1;
        }
    }
    Ok(counts)
}
