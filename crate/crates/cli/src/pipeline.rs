//! Per-instance pose estimation and the detect run over a scene.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ppf_core::bop::{load_scene, SceneImage};
use ppf_core::cloud::{ObjectModel, PointCloud};
use ppf_core::depth::{estimate_normals, unproject_depth};
use ppf_core::geom::RigidPose;
use ppf_core::icp::{refine_icp_indexed, IcpScene};
use ppf_core::image::{dilate_mask, BinaryMask};
use ppf_core::matching::{fitting_score, match_instance, MatchParams, PoseCluster, SceneIndex};
use ppf_core::sampling::SampledCloud;
use ppf_core::symmetry::select_symmetry;
use ppf_eval::{BopResult, Detection, DetectionSet};
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::models::{load_library, LoadedModel, ModelLibrary};

/// One scored pose hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub pose: RigidPose<f64>,
    /// Fitting score against the sampled scene cloud.
    pub fit: f64,
    pub votes: u32,
    pub icp_rms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    /// Highest fit, symmetry-resolved when enabled.
    pub best: Estimate,
    /// Clusters distinct up to object symmetry, after optional refinement,
    /// in vote order.
    pub candidates: Vec<Estimate>,
    /// Points in the restricted scene cloud before downsampling.
    pub scene_points: usize,
}

/// Dilates `mask` by `fraction` of its bounding-box diagonal.
pub fn dilate_by_fraction(mask: &BinaryMask, fraction: f64) -> BinaryMask {
    let r = mask.bbox().map_or(0, |[_, _, w, h]| {
        (fraction * ((w as f64).powi(2) + (h as f64).powi(2)).sqrt()).round() as u32
    });
    dilate_mask(mask, r)
}

/// Oriented scene points inside `mask`, or of the whole image for `None`.
pub fn scene_cloud(scene: &SceneImage<f64>, mask: Option<&BinaryMask>) -> Result<PointCloud<f64>> {
    let org = unproject_depth(&scene.depth, &scene.intrinsics, mask, None)?;
    if org.is_empty() {
        return Ok(org.cloud);
    }
    Ok(estimate_normals(&scene.depth, &scene.intrinsics, &org)?.cloud)
}

/// Estimates the pose of `model` from the scene points inside the dilated
/// `mask` (the whole image for `None`). Returns `None` when no hypothesis
/// can be formed.
pub fn estimate_pose(
    scene: &SceneImage<f64>,
    mask: Option<&BinaryMask>,
    model: &LoadedModel,
    cfg: &PipelineConfig,
) -> Result<Option<InstanceResult>> {
    let dilated = mask.map(|m| dilate_by_fraction(m, cfg.match_params.mask_dilation));
    let cloud = scene_cloud(scene, dilated.as_ref())?;
    estimate_from_cloud(scene, &cloud, model, cfg)
}

/// Drops clusters that some earlier cluster reproduces up to a symmetry of
/// the object, within the clustering thresholds.
fn distinct_up_to_symmetry(
    clusters: Vec<PoseCluster<f64>>,
    object: &ObjectModel<f64>,
    params: &MatchParams<f64>,
) -> Vec<PoseCluster<f64>> {
    let max_t = params.cluster_trans_thresh * object.diameter();
    let mut kept: Vec<PoseCluster<f64>> = Vec::with_capacity(clusters.len());
    for c in clusters {
        let duplicate = kept.iter().any(|k| {
            object.symmetries().iter().any(|s| {
                let p = k.pose.compose(s);
                p.translation_distance(&c.pose) <= max_t && p.rotation_angle_to(&c.pose) <= params.cluster_rot_thresh
            })
        });
        if !duplicate {
            kept.push(c);
        }
    }
    kept
}

/// Pose estimate of `model` from an already restricted oriented `cloud`.
pub fn estimate_from_cloud(
    scene: &SceneImage<f64>,
    cloud: &PointCloud<f64>,
    model: &LoadedModel,
    cfg: &PipelineConfig,
) -> Result<Option<InstanceResult>> {
    let t0 = Instant::now();
    if cloud.is_empty() {
        return Ok(None);
    }
    let ppf = &model.ppf;
    let step = ppf.sample_step();
    let sampled = SampledCloud::downsample(cloud, step)?;
    if sampled.cloud.len() < 2 {
        return Ok(None);
    }
    let t1 = Instant::now();
    let clusters = match_instance(&sampled, ppf, &cfg.match_params)?;
    let t2 = Instant::now();
    if clusters.is_empty() {
        return Ok(None);
    }
    let clusters = distinct_up_to_symmetry(clusters, &model.object, &cfg.match_params);
    let index = SceneIndex::new(&sampled.cloud, step)?;
    let icp_scene = if cfg.refine {
        Some(IcpScene::new(cloud)?)
    } else {
        None
    };
    let candidates: Vec<Estimate> = clusters
        .iter()
        .map(|c| {
            let (pose, icp_rms) = match &icp_scene {
                Some(s) => match refine_icp_indexed(&c.pose, &ppf.model_cloud, s, ppf.diameter, &cfg.icp) {
                    Ok(r) => (r.pose, Some(r.rms_residual)),
                    Err(e) => {
                        log::debug!("ICP kept the voted pose: {e}");
                        (c.pose, None)
                    }
                },
                None => (c.pose, None),
            };
            let fit = if icp_rms.is_some() { fitting_score(&pose, ppf, &index) } else { c.fit };
            Estimate {
                pose,
                fit,
                votes: c.total_votes,
                icp_rms,
            }
        })
        .collect();
    let t3 = Instant::now();
    let mut best = candidates[0];
    for c in &candidates[1..] {
        if c.fit > best.fit {
            best = *c;
        }
    }
    if cfg.symmetry {
        if let Some(rgb) = &scene.rgb {
            best.pose = select_symmetry(rgb, &model.object, &best.pose, &scene.intrinsics)?;
        }
    }
    log::debug!(
        "object {}: {} scene points, {} sampled; prepare {:?}, vote {:?}, refine {:?}, symmetry {:?}",
        ppf.object_id,
        cloud.len(),
        sampled.cloud.len(),
        t1 - t0,
        t2 - t1,
        t3 - t2,
        t3.elapsed()
    );
    Ok(Some(InstanceResult {
        best,
        candidates,
        scene_points: cloud.len(),
    }))
}

/// Mask of a detection: the stored mask, or its filled bounding box.
pub fn detection_mask(det: &Detection, mask: Option<&BinaryMask>, width: u32, height: u32) -> Result<BinaryMask> {
    if let Some(m) = mask {
        if !m.same_size(width, height) {
            return Err(CliError::InvalidArgument(format!(
                "mask of object {} in image {} is {}x{}, image is {width}x{height}",
                det.obj_id, det.im_id, m.width, m.height
            )));
        }
        return Ok(m.clone());
    }
    let [x, y, w, h] = det.bbox;
    Ok(BinaryMask::from_fn(width, height, |u, v| {
        let (u, v) = (u as f64 + 0.5, v as f64 + 0.5);
        u >= x && u < x + w && v >= y && v < y + h
    }))
}

/// Rows for the detections of one image, in input order; detections with no
/// usable scene points are skipped. The time column is left at 0.
pub fn detect_image(
    scene: &SceneImage<f64>,
    instances: &[(&Detection, BinaryMask)],
    library: &ModelLibrary,
    cfg: &PipelineConfig,
) -> Result<Vec<BopResult>> {
    let rows: Vec<Option<BopResult>> = instances
        .par_iter()
        .map(|(det, mask)| {
            let model = library.get(&det.obj_id).ok_or(CliError::UnknownObject(det.obj_id))?;
            match estimate_pose(scene, Some(mask), model, cfg)? {
                Some(r) => Ok(Some(BopResult::from_pose(
                    det.scene_id,
                    det.im_id,
                    det.obj_id,
                    r.best.fit,
                    &r.best.pose,
                    0.0,
                ))),
                None => {
                    log::warn!(
                        "scene {} image {} object {}: no scene points in the mask, skipped",
                        det.scene_id,
                        det.im_id,
                        det.obj_id
                    );
                    Ok(None)
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::InvalidArgument(format!("thread pool: {e}")))
}

/// Runs every detection of `detections` against the images of `scene_dir`
/// with an already loaded model library.
pub fn run_detect_with(
    scene_dir: &Path,
    detections: &DetectionSet,
    library: &ModelLibrary,
    cfg: &PipelineConfig,
) -> Result<Vec<BopResult>> {
    cfg.match_params.validate()?;
    cfg.icp.validate()?;
    for d in &detections.detections {
        if !library.contains_key(&d.obj_id) {
            return Err(CliError::UnknownObject(d.obj_id));
        }
    }
    let mut by_image: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, d) in detections.detections.iter().enumerate() {
        by_image.entry(d.im_id).or_default().push(i);
    }
    let pool = thread_pool(cfg.threads)?;
    let mut out = Vec::new();
    for (im_id, idx) in by_image {
        let scene = load_scene::<f64>(scene_dir, im_id)?;
        let (w, h) = (scene.depth.width, scene.depth.height);
        let start = Instant::now();
        let instances = idx
            .iter()
            .map(|&i| {
                let d = &detections.detections[i];
                Ok((d, detection_mask(d, detections.masks[i].as_ref(), w, h)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rows = pool.install(|| detect_image(&scene, &instances, library, cfg))?;
        let time = if cfg.fixed_time { -1.0 } else { start.elapsed().as_secs_f64() };
        for r in &mut rows {
            r.time = time;
        }
        log::info!("image {im_id}: {} of {} instances in {:.3} s", rows.len(), idx.len(), time);
        out.extend(rows);
    }
    Ok(out)
}

/// Reads detections and models, estimates every pose and returns the rows
/// of the results file.
pub fn run_detect(scene_dir: &Path, detections_path: &Path, cfg: &PipelineConfig) -> Result<Vec<BopResult>> {
    let detections = DetectionSet::read(detections_path)?;
    let ids: Vec<u32> = detections.detections.iter().map(|d| d.obj_id).collect();
    let library = load_library(&cfg.models_dir, &ids, cfg.tau_d, cfg.n_angle)?;
    run_detect_with(scene_dir, &detections, &library, cfg)
}
