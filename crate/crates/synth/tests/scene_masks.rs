use ppf_core::geom::{CameraIntrinsics, Vec3};
use ppf_core::image::BinaryMask;
use ppf_core::render::splat_render;
use ppf_core::shapes::{box_model, cylinder, l_bracket};
use ppf_synth::scene::DEPTH_SCALE;
use ppf_synth::{generate_scene, SceneSpec};

// Pixels where the instance, rendered alone, is the surface stored in the depth map.
fn rendered_pixels(
    scene: &ppf_synth::SyntheticScene,
    model: &ppf_core::cloud::ObjectModel<f64>,
    pose: &ppf_core::geom::RigidPose<f64>,
) -> BinaryMask {
    let r = splat_render(model, pose, &scene.camera).unwrap();
    let half_quantum = 0.5 * DEPTH_SCALE * 1e-3 + 1e-9;
    let w = scene.camera.width;
    BinaryMask::from_fn(w, scene.camera.height, |u, v| {
        let z = r.depth[(v * w + u) as usize];
        z.is_finite() && scene.depth.meters_at(u, v).is_some_and(|d| (d - z).abs() <= half_quantum)
    })
}

#[test]
fn noiseless_masks_match_rendered_pixels() {
    let models = vec![
        l_bracket(1, 0.1, 0.003, [200, 120, 40]).unwrap(),
        box_model(2, Vec3::new(0.08, 0.05, 0.03), 0.003, [40, 90, 200]).unwrap(),
        cylinder(3, 0.03, 0.08, 0.003, 36, [60, 180, 60]).unwrap(),
    ];
    let camera = CameraIntrinsics::new(400.0, 400.0, 160.0, 120.0, 320, 240).unwrap();
    let mut checked = 0;
    for seed in 0..12 {
        let mut spec = SceneSpec::new(&models, 3, camera, 0.0, seed);
        spec.z_range = (0.5, 0.9);
        let scene = generate_scene(&spec).unwrap();
        for inst in scene.instances.iter().filter(|i| i.visib_fract >= 0.9) {
            let expected = rendered_pixels(&scene, &models[inst.model_index], &inst.pose);
            assert_eq!(inst.mask, expected, "seed {seed} object {}", inst.object_id);
            checked += 1;
        }
    }
    assert!(checked >= 10, "only {checked} well-visible instances");
}

#[test]
fn same_seed_gives_identical_scenes() {
    let models = vec![l_bracket(1, 0.1, 0.003, [200, 120, 40]).unwrap()];
    let camera = CameraIntrinsics::new(300.0, 300.0, 80.0, 60.0, 160, 120).unwrap();
    let spec = SceneSpec::new(&models, 2, camera, 0.002, 5);
    assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
}
