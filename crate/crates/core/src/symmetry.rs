//! Picks among symmetric poses by matching corners between a render of the
//! object and the scene image.

use rayon::prelude::*;

use crate::cloud::ObjectModel;
use crate::error::Result;
use crate::geom::{CameraIntrinsics, RigidPose};
use crate::image::{dilate_mask, BinaryMask, ColorImage, PixelBox};
use crate::keypoints::{detect_keypoints, match_keypoint_sets, KeypointSet, PATCH_RADIUS};
use crate::render::splat_render;
use crate::scalar::Real;

/// Footprint dilation, pixels, for the matching region.
pub const REGION_DILATION: u32 = 5;

/// Keypoints only depend on pixels this close to the region.
const CROP_MARGIN: u32 = PATCH_RADIUS as u32 + 4;

fn crop_window(region: &BinaryMask) -> Option<PixelBox> {
    let [x, y, w, h] = region.bbox()?;
    let x0 = x.saturating_sub(CROP_MARGIN);
    let y0 = y.saturating_sub(CROP_MARGIN);
    let x1 = (x + w + CROP_MARGIN).min(region.width);
    let y1 = (y + h + CROP_MARGIN).min(region.height);
    Some([x0, y0, x1 - x0, y1 - y0])
}

/// Same keypoints as on the full image, computed on `window` only.
fn keypoints_in(img: &ColorImage, region: &BinaryMask, window: PixelBox) -> KeypointSet {
    let [x0, y0, w, h] = window;
    let pixels = (0..h).flat_map(|y| (0..w).map(move |x| img.get(x0 + x, y0 + y))).collect();
    let sub = ColorImage::new(w, h, pixels).expect("sized from window");
    let sub_region = BinaryMask::from_fn(w, h, |x, y| region.get(x0 + x, y0 + y));
    let mut k = detect_keypoints(&sub, &sub_region);
    k.positions.iter_mut().for_each(|p| *p = (p.0 + x0, p.1 + y0));
    k
}

/// Match count for every symmetry of `model`, in symmetry-list order.
/// Renders behind the camera count zero.
pub fn symmetry_scores<S: Real>(
    rgb: &ColorImage,
    model: &ObjectModel<S>,
    pose: &RigidPose<S>,
    k: &CameraIntrinsics<S>,
) -> Result<Vec<usize>> {
    if (rgb.width, rgb.height) != (k.width, k.height) {
        return Err(crate::Error::SizeMismatch(format!(
            "rgb {}x{} vs camera {}x{}",
            rgb.width, rgb.height, k.width, k.height
        )));
    }
    Ok(model
        .symmetries()
        .par_iter()
        .map(|s| {
            let Ok(render) = splat_render(model, &pose.compose(s), k) else {
                return 0;
            };
            let region = dilate_mask(&render.mask, REGION_DILATION);
            let Some(window) = crop_window(&region) else { return 0 };
            let a = keypoints_in(&render.color, &region, window);
            let b = keypoints_in(rgb, &region, window);
            match_keypoint_sets(&a, &b).len()
        })
        .collect())
}

/// Returns `pose ∘ S` for the symmetry `S` whose render shares the most
/// corner matches with `rgb`; ties go to the identity, then to the lowest
/// index. Models without colors, with a single color or without nontrivial
/// symmetries come back unchanged.
pub fn select_symmetry<S: Real>(
    rgb: &ColorImage,
    model: &ObjectModel<S>,
    pose: &RigidPose<S>,
    k: &CameraIntrinsics<S>,
) -> Result<RigidPose<S>> {
    let Some(colors) = model.cloud().colors() else {
        return Ok(*pose);
    };
    if model.symmetries().len() <= 1 || colors.iter().all(|c| *c == colors[0]) {
        return Ok(*pose);
    }
    let scores = symmetry_scores(rgb, model, pose, k)?;
    // Index 0 is the identity, so a strict comparison keeps the tie rule.
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(pose.compose(&model.symmetries()[best]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::render::splat_render;
    use crate::shapes::{box_model, textured_cube};

    fn camera() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(300.0, 300.0, 160.0, 120.0, 320, 240).unwrap()
    }

    fn gt() -> RigidPose<f64> {
        RigidPose::from_axis_angle(&Vec3::new(1.0, 0.6, 0.2), 0.8, Vec3::new(0.02, -0.01, 0.45))
    }

    #[test]
    fn corrects_a_face_rotation_of_a_textured_cube() {
        let cube = textured_cube::<f64>(1, 0.1, 0.002, 42).unwrap();
        let k = camera();
        let scene = splat_render(&cube, &gt(), &k).unwrap().color;
        let quarter = RigidPose::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2, Vec3::zeros());
        let candidate = gt().compose(&quarter);
        let out = select_symmetry(&scene, &cube, &candidate, &k).unwrap();
        assert!(out.rotation_angle_to(&gt()) < 1e-6, "{}", out.rotation_angle_to(&gt()));
        // Idempotent.
        let again = select_symmetry(&scene, &cube, &out, &k).unwrap();
        assert!(again.rotation_angle_to(&out) < 1e-9);
    }

    #[test]
    fn output_is_always_a_symmetric_pose() {
        let cube = textured_cube::<f64>(1, 0.1, 0.002, 5).unwrap();
        let k = camera();
        let noise = ColorImage::filled(320, 240, [10, 200, 30]);
        let out = select_symmetry(&noise, &cube, &gt(), &k).unwrap();
        assert!(cube
            .symmetries()
            .iter()
            .any(|s| gt().compose(s).approx_eq(&out, 1e-12, 1e-12)));
        // No matches anywhere: the identity wins the tie.
        assert!(out.approx_eq(&gt(), 1e-12, 1e-12));
    }

    #[test]
    fn trivial_cases_return_pose_unchanged() {
        let k = camera();
        let img = ColorImage::filled(320, 240, [0, 0, 0]);
        let single = textured_cube::<f64>(1, 0.1, 0.004, 1).unwrap().with_symmetries(vec![]);
        assert_eq!(select_symmetry(&img, &single, &gt(), &k).unwrap(), gt());
        let plain = box_model::<f64>(2, Vec3::new(0.1, 0.08, 0.05), 0.004, [1, 2, 3]).unwrap();
        let plain = crate::cloud::ObjectModel::new(2, plain.cloud().clone().without_colors(), plain.diameter(), plain.symmetries().to_vec()).unwrap();
        assert_eq!(select_symmetry(&img, &plain, &gt(), &k).unwrap(), gt());
    }
}
