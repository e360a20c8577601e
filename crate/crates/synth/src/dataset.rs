//! Writing synthetic scenes and models in the BOP layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ppf_core::bop::{self, CameraEntry, GtEntry, GtInfoEntry, ModelInfo};
use ppf_core::cloud::ObjectModel;
use ppf_core::ply::{write_ply, PlyEncoding};
use ppf_eval::detection::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Result, SynthError};
use crate::scene::{generate_scene, item_seed, SceneSpec, SyntheticScene};

/// Detections file listing every visible ground-truth mask of a scene.
pub const GT_DETECTIONS_FILE: &str = "gt_detections.json";

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| SynthError::io(p, e))
}

pub fn mask_path(scene_dir: &Path, im_id: u32, inst: usize) -> PathBuf {
    scene_dir.join("mask_visib").join(format!("{im_id:06}_{inst:06}.png"))
}

fn ids<T>(items: Vec<T>) -> BTreeMap<String, T> {
    items.into_iter().enumerate().map(|(i, v)| (i.to_string(), v)).collect()
}

/// Writes `scenes` as images `0..n` of one BOP scene: cameras, ground truth,
/// visibility, depth and color PNGs, visible masks, and a detections file
/// built from the visible masks.
pub fn write_bop_scene(scene_dir: &Path, scene_id: u32, scenes: &[SyntheticScene]) -> Result<()> {
    for sub in ["depth", "rgb", "mask_visib"] {
        mkdir(&scene_dir.join(sub))?;
    }
    let mut cams = Vec::new();
    let mut gts = Vec::new();
    let mut infos = Vec::new();
    let mut dets = Vec::new();
    for (im, s) in scenes.iter().enumerate() {
        let im = im as u32;
        let k = &s.camera;
        cams.push(CameraEntry {
            cam_k: [k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0],
            depth_scale: s.depth.depth_scale,
        });
        s.depth.write_png(&bop::depth_path(scene_dir, im))?;
        s.rgb.write_png(&bop::rgb_path(scene_dir, im))?;
        gts.push(s.instances.iter().map(|g| GtEntry::from_pose(g.object_id, &g.pose)).collect::<Vec<_>>());
        infos.push(
            s.instances
                .iter()
                .map(|g| GtInfoEntry {
                    visib_fract: g.visib_fract,
                    px_count_all: g.px_count_all,
                    px_count_visib: g.px_count_visib,
                })
                .collect::<Vec<_>>(),
        );
        for (i, g) in s.instances.iter().enumerate() {
            let path = mask_path(scene_dir, im, i);
            g.mask.write_png(&path)?;
            if let Some([x, y, w, h]) = g.mask.bbox() {
                dets.push(Detection {
                    scene_id,
                    im_id: im,
                    obj_id: g.object_id,
                    score: 1.0,
                    mask_path: Some(format!("mask_visib/{}", path.file_name().unwrap().to_string_lossy())),
                    bbox: [x as f64, y as f64, w as f64, h as f64],
                });
            }
        }
    }
    bop::write_json(&scene_dir.join("scene_camera.json"), &ids(cams))?;
    bop::write_json(&scene_dir.join("scene_gt.json"), &ids(gts))?;
    bop::write_json(&scene_dir.join("scene_gt_info.json"), &ids(infos))?;
    bop::write_json(&scene_dir.join(GT_DETECTIONS_FILE), &dets)?;
    Ok(())
}

/// Model info with the diameter and the non-identity symmetries in BOP units.
pub fn model_info(model: &ObjectModel<f64>) -> ModelInfo {
    let symmetries_discrete = model.symmetries()[1..]
        .iter()
        .map(|s| {
            let r = s.rotation_matrix().to_row_major();
            let t = s.translation();
            [
                r[0], r[1], r[2], t.x * 1e3, r[3], r[4], r[5], t.y * 1e3, r[6], r[7], r[8], t.z * 1e3, 0.0, 0.0, 0.0, 1.0,
            ]
        })
        .collect();
    ModelInfo {
        diameter: model.diameter() * 1e3,
        symmetries_discrete,
        symmetries_continuous: Vec::new(),
    }
}

/// Writes `obj_<id>.ply` files and `models_info.json`.
pub fn write_models(models_dir: &Path, models: &[ObjectModel<f64>]) -> Result<()> {
    mkdir(models_dir)?;
    let mut info = BTreeMap::new();
    for m in models {
        write_ply(&bop::model_ply_path(models_dir, m.object_id), m.cloud(), PlyEncoding::BinaryLittleEndian)?;
        info.insert(m.object_id.to_string(), model_info(m));
    }
    bop::write_json(&models_dir.join("models_info.json"), &info)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DatasetSpec<'a> {
    /// Template for every scene; `seed` and `n_objects` are overridden.
    pub scene: SceneSpec<'a>,
    pub n_scenes: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub seed: u64,
}

/// Spec of scene `index`: seed and object count derived from the master seed.
pub fn dataset_scene_spec<'a>(spec: &DatasetSpec<'a>, index: usize) -> SceneSpec<'a> {
    let seed = item_seed(spec.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = spec.scene.clone();
    s.n_objects = rng.random_range(spec.min_objects..=spec.max_objects);
    s.seed = rng.random();
    s
}

/// Generates `n_scenes` scenes in parallel; the result does not depend on
/// the thread count.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<SyntheticScene>> {
    if spec.min_objects == 0 || spec.min_objects > spec.max_objects {
        return Err(SynthError::InvalidArgument(format!(
            "bad object count range {}..={}",
            spec.min_objects, spec.max_objects
        )));
    }
    (0..spec.n_scenes)
        .into_par_iter()
        .map(|i| generate_scene(&dataset_scene_spec(spec, i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ppf_core::bop::{load_object_model, load_scene, read_models_info};
    use ppf_core::geom::{CameraIntrinsics, Vec3};
    use ppf_core::shapes::{box_model, l_bracket};
    use ppf_eval::detection::DetectionSet;

    fn models() -> Vec<ObjectModel<f64>> {
        vec![
            l_bracket(1, 0.1, 0.005, [200, 100, 0]).unwrap(),
            box_model(2, Vec3::new(0.08, 0.05, 0.03), 0.005, [0, 90, 200]).unwrap(),
        ]
    }

    fn spec(models: &[ObjectModel<f64>]) -> DatasetSpec<'_> {
        let k = CameraIntrinsics::new(400.0, 400.0, 128.0, 96.0, 256, 192).unwrap();
        DatasetSpec {
            scene: SceneSpec::new(models, 1, k, 0.001, 0),
            n_scenes: 3,
            min_objects: 1,
            max_objects: 3,
            seed: 9,
        }
    }

    #[test]
    fn bop_round_trip() {
        let models = models();
        let spec = spec(&models);
        let scenes = generate_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let scene_dir = dir.path().join("000001");
        write_bop_scene(&scene_dir, 1, &scenes).unwrap();
        write_models(&dir.path().join("models"), &models).unwrap();

        for (im, s) in scenes.iter().enumerate() {
            let back = load_scene::<f64>(&scene_dir, im as u32).unwrap();
            assert_eq!(back.depth, s.depth);
            assert_eq!(back.rgb.as_ref(), Some(&s.rgb));
            assert!((back.intrinsics.fx - 400.0).abs() < 1e-12);
        }
        let gt = bop::read_scene_gt(&scene_dir).unwrap();
        for (im, s) in scenes.iter().enumerate() {
            for (e, g) in gt[&(im as u32)].iter().zip(&s.instances) {
                assert!(e.pose::<f64>().approx_eq(&g.pose, 1e-9, 1e-9));
            }
        }
        let dets = DetectionSet::read(&scene_dir.join(GT_DETECTIONS_FILE)).unwrap();
        let visible: usize = scenes.iter().map(|s| s.instances.iter().filter(|g| g.px_count_visib > 0).count()).sum();
        assert_eq!(dets.len(), visible);

        let info = read_models_info(&dir.path().join("models")).unwrap();
        let box_back = load_object_model::<f64>(&dir.path().join("models"), 2, info.get(&2)).unwrap();
        assert_eq!(box_back.symmetries().len(), 4);
        assert!((box_back.diameter() - models[1].diameter()).abs() < 1e-9);
        for (a, b) in box_back.symmetries().iter().zip(models[1].symmetries()) {
            assert!(a.approx_eq(b, 1e-9, 1e-9));
        }
    }

    #[test]
    fn dataset_independent_of_thread_count() {
        let models = models();
        let spec = spec(&models);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| generate_dataset(&spec)).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a, b);
        let counts: Vec<usize> = a.iter().map(|s| s.instances.len()).collect();
        assert!(counts.iter().all(|c| (1..=3).contains(c)));
    }
}
