//! Scoring of pose estimates against ground truth, per image and object.

use std::collections::BTreeMap;
use std::path::Path;

use ppf_core::bop;
use ppf_core::cloud::ObjectModel;
use ppf_core::geom::{CameraIntrinsics, RigidPose};
use ppf_core::image::DepthMap;

use crate::bop_csv::BopResult;
use crate::error::{EvalError, Result};
use crate::pose_error::{mspd, mssd};
use crate::recall::{average_recall, InstanceError, PoseErrorReport, Thresholds};

/// Ground-truth instances below this visible fraction are not scored.
pub const MIN_VISIBLE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub obj_id: u32,
    pub pose: RigidPose<f64>,
    pub visib_fract: f64,
}

/// Ground truth of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GtImage {
    pub scene_id: u32,
    pub im_id: u32,
    pub intrinsics: CameraIntrinsics<f64>,
    pub instances: Vec<GtInstance>,
}

/// Reads every image of a BOP scene directory. Visibility comes from
/// `scene_gt_info.json` when present and is 1 otherwise.
pub fn load_scene_gt(scene_dir: &Path, scene_id: u32) -> Result<Vec<GtImage>> {
    let cams = bop::read_scene_camera(scene_dir)?;
    let gt = bop::read_scene_gt(scene_dir)?;
    let info = bop::read_scene_gt_info(scene_dir)?;
    let mut out = Vec::new();
    for (&im_id, entries) in &gt {
        let cam = cams.get(&im_id).ok_or_else(|| ppf_core::Error::MissingImage {
            image_id: im_id,
            path: scene_dir.join("scene_camera.json"),
        })?;
        let depth = DepthMap::read_png(&bop::depth_path(scene_dir, im_id), cam.depth_scale)?;
        let k = cam.cam_k;
        let intrinsics = CameraIntrinsics::new(k[0], k[4], k[2], k[5], depth.width, depth.height)?;
        let vis = info.as_ref().and_then(|m| m.get(&im_id));
        let instances = entries
            .iter()
            .enumerate()
            .map(|(i, e)| GtInstance {
                obj_id: e.obj_id,
                pose: e.pose(),
                visib_fract: vis.and_then(|v| v.get(i)).map_or(1.0, |v| v.visib_fract),
            })
            .collect();
        out.push(GtImage {
            scene_id,
            im_id,
            intrinsics,
            instances,
        });
    }
    Ok(out)
}

/// Per-instance errors of `results` against `gt`. Within each image and
/// object, estimates are taken by decreasing score and each is assigned to
/// the unassigned ground-truth instance with the smallest MSSD. Instances
/// left without an estimate count as missed; estimates without a ground-truth
/// instance are ignored.
pub fn instance_errors(
    results: &[BopResult],
    gt: &[GtImage],
    models: &BTreeMap<u32, ObjectModel<f64>>,
) -> Result<Vec<InstanceError>> {
    let mut by_image: BTreeMap<(u32, u32, u32), Vec<&BopResult>> = BTreeMap::new();
    for r in results {
        by_image.entry((r.scene_id, r.im_id, r.obj_id)).or_default().push(r);
    }
    for ests in by_image.values_mut() {
        ests.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
    let mut out = Vec::new();
    for img in gt {
        let mut objs: Vec<u32> = img.instances.iter().map(|g| g.obj_id).collect();
        objs.sort_unstable();
        objs.dedup();
        for obj in objs {
            let model = models
                .get(&obj)
                .ok_or_else(|| EvalError::InvalidArgument(format!("no model for object {obj}")))?;
            let insts: Vec<&GtInstance> = img
                .instances
                .iter()
                .filter(|g| g.obj_id == obj && g.visib_fract >= MIN_VISIBLE_FRACTION)
                .collect();
            let mut errs: Vec<Option<(f64, f64)>> = vec![None; insts.len()];
            for est in by_image.get(&(img.scene_id, img.im_id, obj)).into_iter().flatten() {
                let pose = est.pose::<f64>();
                let mut best: Option<(usize, f64)> = None;
                for (i, g) in insts.iter().enumerate() {
                    if errs[i].is_some() {
                        continue;
                    }
                    let e = mssd(&pose, &g.pose, model)?;
                    if best.is_none_or(|(_, b)| e < b) {
                        best = Some((i, e));
                    }
                }
                let Some((i, e)) = best else { break };
                let p = match mspd(&pose, &insts[i].pose, model, &img.intrinsics, img.intrinsics.width) {
                    Ok(p) => p,
                    Err(EvalError::BehindCamera) => f64::INFINITY,
                    Err(e) => return Err(e),
                };
                errs[i] = Some((e, p));
            }
            for e in errs {
                out.push(match e {
                    Some((s, p)) => InstanceError {
                        object_id: obj,
                        mssd: s,
                        mspd: p,
                        diameter: model.diameter(),
                    },
                    None => InstanceError::missed(obj, model.diameter()),
                });
            }
        }
    }
    Ok(out)
}

/// [`instance_errors`] followed by [`average_recall`].
pub fn evaluate(
    results: &[BopResult],
    gt: &[GtImage],
    models: &BTreeMap<u32, ObjectModel<f64>>,
    thresholds: &Thresholds,
) -> Result<PoseErrorReport> {
    Ok(average_recall(&instance_errors(results, gt, models)?, thresholds))
}
