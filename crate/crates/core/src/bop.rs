//! BOP dataset layout: scene cameras, ground-truth poses, model info.
//!
//! ```text
//! <scene>/scene_camera.json   {"<im_id>": {"cam_K": [9 reals], "depth_scale": r}}
//! <scene>/scene_gt.json       {"<im_id>": [{"cam_R_m2c": [9], "cam_t_m2c": [3 mm], "obj_id": n}]}
//! <scene>/scene_gt_info.json  {"<im_id>": [{"visib_fract": r, ...}]}
//! <scene>/depth/<im_id:06>.png, <scene>/rgb/<im_id:06>.png
//! <models>/models_info.json   {"<obj_id>": {"diameter": mm, "symmetries_discrete": [[16]], ...}}
//! <models>/obj_<obj_id:06>.ply
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cloud::ObjectModel;
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, Mat3, Quaternion, RigidPose, Vec3};
use crate::image::{ColorImage, DepthMap};
use crate::ply::load_ply;
use crate::scalar::Real;

/// Number of rotations a continuous symmetry axis is discretized into.
pub const CONTINUOUS_SYMMETRY_STEPS: usize = 36;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CameraEntry {
    #[serde(rename = "cam_K")]
    pub cam_k: [f64; 9],
    pub depth_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GtEntry {
    #[serde(rename = "cam_R_m2c")]
    pub cam_r_m2c: [f64; 9],
    /// Millimeters.
    pub cam_t_m2c: [f64; 3],
    pub obj_id: u32,
}

impl GtEntry {
    pub fn from_pose<S: Real>(obj_id: u32, pose: &RigidPose<S>) -> Self {
        let r = pose.rotation_matrix().to_row_major().map(|v| v.as_f64());
        let t = pose.translation();
        Self {
            cam_r_m2c: r,
            cam_t_m2c: [t.x.as_f64() * 1e3, t.y.as_f64() * 1e3, t.z.as_f64() * 1e3],
            obj_id,
        }
    }

    /// Pose in meters.
    pub fn pose<S: Real>(&self) -> RigidPose<S> {
        pose_from_rt_mm(&self.cam_r_m2c, &self.cam_t_m2c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GtInfoEntry {
    pub visib_fract: f64,
    #[serde(default)]
    pub px_count_all: u64,
    #[serde(default)]
    pub px_count_visib: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ContinuousSymmetry {
    pub axis: [f64; 3],
    /// Millimeters.
    pub offset: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct ModelInfo {
    /// Millimeters.
    pub diameter: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub symmetries_discrete: Vec<[f64; 16]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub symmetries_continuous: Vec<ContinuousSymmetry>,
}

/// Row-major rotation and a translation in millimeters to a metric pose.
pub fn pose_from_rt_mm<S: Real>(r: &[f64; 9], t_mm: &[f64; 3]) -> RigidPose<S> {
    let m = Mat3::from_row_major(&r.map(S::lit));
    RigidPose::from_matrix(
        &m,
        Vec3::new(S::lit(t_mm[0] * 1e-3), S::lit(t_mm[1] * 1e-3), S::lit(t_mm[2] * 1e-3)),
    )
}

impl ModelInfo {
    /// All symmetry transforms in meters: the identity and discrete ones,
    /// each combined with every step of each continuous axis.
    pub fn symmetry_transforms<S: Real>(&self) -> Vec<RigidPose<S>> {
        let mut discrete = vec![RigidPose::identity()];
        for m in &self.symmetries_discrete {
            let r = [m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]];
            discrete.push(pose_from_rt_mm(&r, &[m[3], m[7], m[11]]));
        }
        if self.symmetries_continuous.is_empty() {
            return discrete;
        }
        let mut out = Vec::new();
        for cs in &self.symmetries_continuous {
            let axis = Vec3::from_array(cs.axis.map(S::lit));
            let offset = Vec3::from_array(cs.offset.map(|v| S::lit(v * 1e-3)));
            for k in 0..CONTINUOUS_SYMMETRY_STEPS {
                let angle = S::TAU() * S::from_usize_lossy(k)
                    / S::from_usize_lossy(CONTINUOUS_SYMMETRY_STEPS);
                let q = Quaternion::from_axis_angle(&axis, angle);
                let rot = RigidPose::new(q, offset - q.rotate(&offset));
                for d in &discrete {
                    out.push(rot.compose(d));
                }
            }
        }
        out
    }
}

/// Depth, optional color and intrinsics of one BOP image.
#[derive(Debug, Clone)]
pub struct SceneImage<S> {
    pub depth: DepthMap,
    pub rgb: Option<ColorImage>,
    pub intrinsics: CameraIntrinsics<S>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a `{"<id>": value}` map into integer keys.
pub fn keyed_by_id<T>(path: &Path, map: BTreeMap<String, T>) -> Result<BTreeMap<u32, T>> {
    map.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<u32>()
                .map(|id| (id, v))
                .map_err(|_| Error::InvalidArgument(format!("{}: non-integer key '{k}'", path.display())))
        })
        .collect()
}

pub fn read_scene_camera(scene_dir: &Path) -> Result<BTreeMap<u32, CameraEntry>> {
    let path = scene_dir.join("scene_camera.json");
    let raw: BTreeMap<String, CameraEntry> = read_json(&path)?;
    keyed_by_id(&path, raw)
}

pub fn read_scene_gt(scene_dir: &Path) -> Result<BTreeMap<u32, Vec<GtEntry>>> {
    let path = scene_dir.join("scene_gt.json");
    let raw: BTreeMap<String, Vec<GtEntry>> = read_json(&path)?;
    keyed_by_id(&path, raw)
}

/// `Ok(None)` when the scene has no `scene_gt_info.json`.
pub fn read_scene_gt_info(scene_dir: &Path) -> Result<Option<BTreeMap<u32, Vec<GtInfoEntry>>>> {
    let path = scene_dir.join("scene_gt_info.json");
    if !path.exists() {
        return Ok(None);
    }
    let raw: BTreeMap<String, Vec<GtInfoEntry>> = read_json(&path)?;
    keyed_by_id(&path, raw).map(Some)
}

pub fn read_models_info(models_dir: &Path) -> Result<BTreeMap<u32, ModelInfo>> {
    let path = models_dir.join("models_info.json");
    let raw: BTreeMap<String, ModelInfo> = read_json(&path)?;
    keyed_by_id(&path, raw)
}

pub fn depth_path(scene_dir: &Path, image_id: u32) -> PathBuf {
    scene_dir.join("depth").join(format!("{image_id:06}.png"))
}

pub fn rgb_path(scene_dir: &Path, image_id: u32) -> PathBuf {
    scene_dir.join("rgb").join(format!("{image_id:06}.png"))
}

pub fn model_ply_path(models_dir: &Path, obj_id: u32) -> PathBuf {
    models_dir.join(format!("obj_{obj_id:06}.ply"))
}

/// Loads depth (and color, when present) plus intrinsics for one image.
pub fn load_scene<S: Real>(scene_dir: &Path, image_id: u32) -> Result<SceneImage<S>> {
    let cams = read_scene_camera(scene_dir)?;
    let cam = cams.get(&image_id).ok_or_else(|| Error::MissingImage {
        image_id,
        path: scene_dir.join("scene_camera.json"),
    })?;
    let depth = DepthMap::read_png(&depth_path(scene_dir, image_id), cam.depth_scale)?;
    let k = cam.cam_k;
    let intrinsics = CameraIntrinsics::new(
        S::lit(k[0]),
        S::lit(k[4]),
        S::lit(k[2]),
        S::lit(k[5]),
        depth.width,
        depth.height,
    )
    .map_err(|e| Error::SizeMismatch(format!("image {image_id}: intrinsics do not fit the depth image: {e}")))?;
    let rgb_file = rgb_path(scene_dir, image_id);
    let rgb_file = if rgb_file.exists() {
        Some(rgb_file)
    } else {
        let jpg = rgb_file.with_extension("jpg");
        jpg.exists().then_some(jpg)
    };
    let rgb = match rgb_file {
        Some(p) => {
            let img = ColorImage::read_png(&p)?;
            if img.width != depth.width || img.height != depth.height {
                return Err(Error::SizeMismatch(format!(
                    "image {image_id}: rgb {}x{} vs depth {}x{}",
                    img.width, img.height, depth.width, depth.height
                )));
            }
            Some(img)
        }
        None => None,
    };
    Ok(SceneImage {
        depth,
        rgb,
        intrinsics,
    })
}

/// Loads `obj_<id>.ply` with diameter and symmetries from `models_info.json`.
/// Normals are required downstream, so a model without them is rejected.
pub fn load_object_model<S: Real>(models_dir: &Path, obj_id: u32, info: Option<&ModelInfo>) -> Result<ObjectModel<S>> {
    let path = model_ply_path(models_dir, obj_id);
    let ply = load_ply::<S>(&path)?;
    if !ply.cloud.has_normals() {
        return Err(Error::Ply(format!("{}: model has no vertex normals", path.display())));
    }
    match info {
        Some(info) => ObjectModel::new(
            obj_id,
            ply.cloud,
            S::lit(info.diameter * 1e-3),
            info.symmetry_transforms(),
        ),
        None => ObjectModel::new(obj_id, ply.cloud, ply.diameter, Vec::new()),
    }
}
