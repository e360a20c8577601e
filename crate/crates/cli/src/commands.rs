//! Library side of the subcommands other than detect.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ppf_core::bop::{load_object_model, read_models_info};
use ppf_core::cloud::ObjectModel;
use ppf_core::geom::{CameraIntrinsics, Vec3};
use ppf_core::image::ColorImage;
use ppf_core::shapes::{box_model, cylinder, l_bracket, textured_cube};
use ppf_eval::results::{evaluate, load_scene_gt};
use ppf_eval::{read_bop_csv, select_best, CandidateModel, DetectionSet, MapReport, PoseErrorReport, Thresholds};
use ppf_synth::scene::BackgroundPlane;
use ppf_synth::{
    build_training_set, generate_dataset, write_bop_scene, write_models, Crop, DatasetSpec, SceneSpec, TrainSetParams,
    TrainSetSummary,
};

use crate::error::{CliError, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Scores a results CSV against the ground truth of one BOP scene.
pub fn eval_pose(results_csv: &Path, scene_dir: &Path, scene_id: u32, models_dir: &Path) -> Result<PoseErrorReport> {
    let results = read_bop_csv(results_csv)?;
    let gt = load_scene_gt(scene_dir, scene_id)?;
    let info = if models_dir.join("models_info.json").exists() {
        read_models_info(models_dir)?
    } else {
        BTreeMap::new()
    };
    let mut models = BTreeMap::new();
    for obj in gt.iter().flat_map(|g| g.instances.iter().map(|i| i.obj_id)) {
        if !models.contains_key(&obj) {
            models.insert(obj, load_object_model::<f64>(models_dir, obj, info.get(&obj))?);
        }
    }
    Ok(evaluate(&results, &gt, &models, &Thresholds::default())?)
}

pub fn eval_map(pred: &Path, gt: &Path, iou: f64, class_agnostic: bool) -> Result<MapReport> {
    let p = DetectionSet::read(pred)?;
    let g = DetectionSet::read(gt)?;
    Ok(ppf_eval::map_at_iou(&p, &g, iou, class_agnostic)?)
}

/// Parses `NAME=PATH`.
pub fn parse_candidate(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((n, p)) if !n.is_empty() && !p.is_empty() => Ok((n.to_string(), PathBuf::from(p))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

pub fn select_detector(gt: &Path, candidates: &[(String, PathBuf)], class_agnostic: bool) -> Result<(String, Vec<f64>)> {
    let g = DetectionSet::read(gt)?;
    let cands = candidates
        .iter()
        .map(|(name, path)| {
            Ok(CandidateModel {
                name: name.clone(),
                predictions: DetectionSet::read(path)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(select_best(&cands, &g, class_agnostic)?)
}

/// Procedural objects used by `synth-scenes`: an L bracket, a plain box, a
/// cylinder and a textured cube, with ids 1 to 4.
pub fn demo_models(spacing: f64) -> Result<Vec<ObjectModel<f64>>> {
    Ok(vec![
        l_bracket(1, 0.1, spacing, [200, 120, 40])?,
        box_model(2, Vec3::new(0.08, 0.05, 0.03), spacing, [40, 90, 200])?,
        cylinder(3, 0.03, 0.08, spacing, 36, [60, 180, 60])?,
        textured_cube(4, 0.06, spacing, 7)?,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_images: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Depth noise standard deviation, meters.
    pub noise_sigma: f64,
    pub seed: u64,
    pub camera: CameraIntrinsics<f64>,
    /// Depth of a background plane along the optical axis, meters.
    pub plane_depth: Option<f64>,
    pub scene_id: u32,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_images: 10,
            min_objects: 1,
            max_objects: 3,
            noise_sigma: 0.002,
            seed: 0,
            camera: CameraIntrinsics::new(572.0, 572.0, 320.0, 240.0, 640, 480).expect("valid camera"),
            plane_depth: None,
            scene_id: 1,
        }
    }
}

/// Writes `<out>/models` and `<out>/<scene_id>` with a ground-truth
/// detections file.
pub fn synth_scenes(out: &Path, p: &SynthParams) -> Result<PathBuf> {
    let models = demo_models(0.002)?;
    let mut scene = SceneSpec::new(&models, 1, p.camera, p.noise_sigma, 0);
    if let Some(d) = p.plane_depth {
        scene.plane = Some(BackgroundPlane::tilted(d, 0.0));
        scene.z_range = (scene.z_range.0, scene.z_range.1.min(d * 0.9));
    }
    let spec = DatasetSpec {
        scene,
        n_scenes: p.n_images,
        min_objects: p.min_objects,
        max_objects: p.max_objects,
        seed: p.seed,
    };
    let scenes = generate_dataset(&spec)?;
    write_models(&out.join("models"), &models)?;
    let scene_dir = out.join(format!("{:06}", p.scene_id));
    write_bop_scene(&scene_dir, p.scene_id, &scenes)?;
    Ok(scene_dir)
}

fn pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    v.sort();
    Ok(v)
}

/// Reads `<dir>/<class_id>/*.png` RGBA crops.
pub fn read_crops(dir: &Path) -> Result<Vec<Crop>> {
    let mut classes: Vec<(u32, PathBuf)> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .filter_map(|p| Some((p.file_name()?.to_str()?.parse().ok()?, p)))
        .collect();
    classes.sort();
    let mut out = Vec::new();
    for (id, d) in classes {
        for p in pngs(&d)? {
            out.push(Crop::read_png(&p, id)?);
        }
    }
    Ok(out)
}

pub fn read_backgrounds(dir: &Path) -> Result<Vec<ColorImage>> {
    pngs(dir)?.iter().map(|p| Ok(ColorImage::read_png(p)?)).collect()
}

pub fn compose_train(crops_dir: &Path, backgrounds_dir: &Path, out: &Path, params: &TrainSetParams) -> Result<TrainSetSummary> {
    let crops = read_crops(crops_dir)?;
    let bgs = read_backgrounds(backgrounds_dir)?;
    Ok(build_training_set(&crops, &bgs, params, out)?)
}
