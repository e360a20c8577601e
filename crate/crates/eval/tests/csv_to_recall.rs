use std::collections::BTreeMap;

use ppf_core::geom::{CameraIntrinsics, RigidPose, Vec3};
use ppf_core::shapes::{box_model, box_symmetries};
use ppf_eval::results::{evaluate, GtImage, GtInstance};
use ppf_eval::{read_bop_csv, write_bop_csv, BopResult, Thresholds};
use tempfile::TempDir;

fn gt_images() -> Vec<GtImage> {
    let k = CameraIntrinsics::new(572.0, 572.0, 320.0, 240.0, 640, 480).unwrap();
    (0..4)
        .map(|im| GtImage {
            scene_id: 1,
            im_id: im,
            intrinsics: k,
            instances: vec![GtInstance {
                obj_id: 2,
                pose: RigidPose::from_axis_angle(&Vec3::new(1.0, 2.0, 0.5), 0.3 * im as f64, Vec3::new(0.0, 0.0, 0.6 + 0.1 * im as f64)),
                visib_fract: 1.0,
            }],
        })
        .collect()
}

#[test]
fn csv_round_trip_feeds_recall() {
    let model = box_model::<f64>(2, Vec3::new(0.08, 0.05, 0.03), 0.004, [0, 0, 0]).unwrap();
    assert_eq!(model.symmetries().len(), box_symmetries().len());
    let models = BTreeMap::from([(2, model.clone())]);
    let gt = gt_images();
    let flip = &model.symmetries()[1];
    // Two exact (one via a symmetry), one a meter off, one missing.
    let rows: Vec<BopResult> = gt[..3]
        .iter()
        .map(|g| {
            let p = g.instances[0].pose;
            let est = match g.im_id {
                0 => p,
                1 => p.compose(flip),
                _ => RigidPose::new(*p.rotation(), *p.translation() + Vec3::new(1.0, 0.0, 0.0)),
            };
            BopResult::from_pose(1, g.im_id, 2, 1.0, &est, 0.5)
        })
        .collect();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("r.csv");
    write_bop_csv(&path, &rows).unwrap();
    let back = read_bop_csv(&path).unwrap();
    let report = evaluate(&back, &gt, &models, &Thresholds::default()).unwrap();
    assert!((report.ar() - 0.5).abs() < 1e-9, "{}", report.ar());
}
