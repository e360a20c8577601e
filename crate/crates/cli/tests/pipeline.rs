use ppf_cli::{estimate_from_cloud, estimate_pose, scene_cloud, LoadedModel, PipelineConfig};
use ppf_core::bop::SceneImage;
use ppf_core::geom::{CameraIntrinsics, Vec3};
use ppf_core::ppf::{DEFAULT_N_ANGLE, DEFAULT_TAU_D};
use ppf_core::shapes::{box_model, cylinder, l_bracket};
use ppf_eval::mssd;
use ppf_synth::{generate_scene, SceneSpec, SyntheticScene};

fn image(s: &SyntheticScene) -> SceneImage<f64> {
    SceneImage {
        depth: s.depth.clone(),
        rgb: Some(s.rgb.clone()),
        intrinsics: s.camera,
    }
}

#[test]
fn single_object_pose_is_accurate() {
    let bracket = l_bracket(1, 0.1, 0.002, [200, 120, 40]).unwrap();
    let lm = LoadedModel::build(bracket.clone(), DEFAULT_TAU_D, DEFAULT_N_ANGLE).unwrap();
    let camera = CameraIntrinsics::new(572.0, 572.0, 320.0, 240.0, 640, 480).unwrap();
    let models = [bracket];
    for seed in 0..5 {
        let mut spec = SceneSpec::new(&models, 1, camera, 0.0, seed);
        spec.z_range = (0.5, 0.8);
        let scene = generate_scene(&spec).unwrap();
        let g = &scene.instances[0];
        let r = estimate_pose(&image(&scene), Some(&g.mask), &lm, &PipelineConfig::default())
            .unwrap()
            .expect("estimate");
        let e = mssd(&r.best.pose, &g.pose, &models[0]).unwrap();
        assert!(e < 0.05 * models[0].diameter(), "seed {seed}: mssd {e}");
    }
}

// Position of the first candidate within 0.1 d of ground truth, in vote order.
fn gt_rank(candidates: &[ppf_cli::Estimate], gt: &ppf_core::geom::RigidPose<f64>, lm: &LoadedModel) -> usize {
    let d = lm.object.diameter();
    candidates
        .iter()
        .position(|c| mssd(&c.pose, gt, &lm.object).unwrap() < 0.1 * d)
        .unwrap_or(usize::MAX)
}

#[test]
fn masking_never_lowers_ground_truth_rank() {
    let models = vec![
        l_bracket(1, 0.1, 0.002, [200, 120, 40]).unwrap(),
        box_model(2, Vec3::new(0.08, 0.05, 0.03), 0.002, [40, 90, 200]).unwrap(),
        cylinder(3, 0.03, 0.08, 0.002, 36, [60, 180, 60]).unwrap(),
    ];
    let lm = LoadedModel::build(models[0].clone(), DEFAULT_TAU_D, DEFAULT_N_ANGLE).unwrap();
    let camera = CameraIntrinsics::new(300.0, 300.0, 100.0, 75.0, 200, 150).unwrap();
    let cfg = PipelineConfig {
        refine: false,
        symmetry: false,
        ..PipelineConfig::default()
    };
    let mut checked = 0;
    for seed in 0..10 {
        let mut spec = SceneSpec::new(&models, 3, camera, 0.001, seed);
        spec.z_range = (0.5, 0.8);
        let scene = generate_scene(&spec).unwrap();
        let img = image(&scene);
        let full_cloud = scene_cloud(&img, None).unwrap();
        let full = estimate_from_cloud(&img, &full_cloud, &lm, &cfg).unwrap();
        for g in scene.instances.iter().filter(|g| g.object_id == 1 && g.visib_fract >= 0.5) {
            let masked = estimate_pose(&img, Some(&g.mask), &lm, &cfg).unwrap();
            let rank_masked = masked.map_or(usize::MAX, |r| gt_rank(&r.candidates, &g.pose, &lm));
            let rank_full = full.as_ref().map_or(usize::MAX, |r| gt_rank(&r.candidates, &g.pose, &lm));
            assert!(rank_masked <= rank_full, "seed {seed}: masked rank {rank_masked}, full rank {rank_full}");
            checked += 1;
        }
    }
    assert!(checked >= 5, "only {checked} instances");
}
