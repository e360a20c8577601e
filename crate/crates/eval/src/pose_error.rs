//! Maximum symmetry-aware surface and projection distances.

use ppf_core::cloud::ObjectModel;
use ppf_core::geom::{CameraIntrinsics, RigidPose, Vec3};
use ppf_core::Real;

use crate::error::{EvalError, Result};

/// `min_S max_x |est(x) - gt(S(x))|` over `symmetries` and `vertices`.
pub fn mssd_points<S: Real>(
    est: &RigidPose<S>,
    gt: &RigidPose<S>,
    vertices: &[Vec3<S>],
    symmetries: &[RigidPose<S>],
) -> Result<S> {
    if vertices.is_empty() {
        return Err(EvalError::Empty("model vertices"));
    }
    if symmetries.is_empty() {
        return Err(EvalError::Empty("symmetry list"));
    }
    let moved: Vec<Vec3<S>> = vertices.iter().map(|x| est.transform_point(x)).collect();
    let mut best = S::infinity();
    for s in symmetries {
        let g = gt.compose(s);
        let mut worst = S::zero();
        for (x, e) in vertices.iter().zip(&moved) {
            worst = worst.max(e.distance(&g.transform_point(x)));
            if worst >= best {
                break;
            }
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// MSSD over the model's vertices and symmetry list, meters.
pub fn mssd<S: Real>(est: &RigidPose<S>, gt: &RigidPose<S>, model: &ObjectModel<S>) -> Result<S> {
    mssd_points(est, gt, model.cloud().points(), model.symmetries())
}

/// `min_S max_x r |proj(est(x)) - proj(gt(S(x)))|` with `r = 640 / width`.
pub fn mspd_points<S: Real>(
    est: &RigidPose<S>,
    gt: &RigidPose<S>,
    vertices: &[Vec3<S>],
    symmetries: &[RigidPose<S>],
    k: &CameraIntrinsics<S>,
    image_width: u32,
) -> Result<S> {
    if vertices.is_empty() {
        return Err(EvalError::Empty("model vertices"));
    }
    if symmetries.is_empty() {
        return Err(EvalError::Empty("symmetry list"));
    }
    if image_width == 0 {
        return Err(EvalError::InvalidArgument("image width must be positive".into()));
    }
    let r = S::lit(640.0) / S::from_u32(image_width).unwrap();
    let proj = |p: Vec3<S>| k.project(&p).ok_or(EvalError::BehindCamera);
    let est_px: Vec<(S, S)> = vertices
        .iter()
        .map(|x| proj(est.transform_point(x)))
        .collect::<Result<_>>()?;
    let mut best = S::infinity();
    for s in symmetries {
        let g = gt.compose(s);
        let mut worst = S::zero();
        for (x, e) in vertices.iter().zip(&est_px) {
            let (u, v) = proj(g.transform_point(x))?;
            worst = worst.max(r * ((e.0 - u).powi(2) + (e.1 - v).powi(2)).sqrt());
        }
        best = best.min(worst);
    }
    Ok(best)
}

/// MSPD over the model's vertices and symmetry list, pixels at 640 width.
pub fn mspd<S: Real>(
    est: &RigidPose<S>,
    gt: &RigidPose<S>,
    model: &ObjectModel<S>,
    k: &CameraIntrinsics<S>,
    image_width: u32,
) -> Result<S> {
    mspd_points(est, gt, model.cloud().points(), model.symmetries(), k, image_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ppf_core::cloud::PointCloud;
    use ppf_core::shapes::cube_rotations;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = [[f64; 3]; 3];

    fn mat(p: &RigidPose<f64>) -> (M, [f64; 3]) {
        let r = p.rotation_matrix().to_row_major();
        let t = p.translation().to_array();
        ([[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]], t)
    }

    fn apply((r, t): &(M, [f64; 3]), x: &[f64; 3]) -> [f64; 3] {
        let mut o = *t;
        for i in 0..3 {
            for j in 0..3 {
                o[i] += r[i][j] * x[j];
            }
        }
        o
    }

    /// Double loop over symmetries and vertices with plain arrays.
    fn brute_mssd(est: &RigidPose<f64>, gt: &RigidPose<f64>, xs: &[[f64; 3]], syms: &[RigidPose<f64>]) -> f64 {
        let (e, g) = (mat(est), mat(gt));
        syms.iter()
            .map(|s| {
                let s = mat(s);
                xs.iter()
                    .map(|x| {
                        let a = apply(&e, x);
                        let b = apply(&g, &apply(&s, x));
                        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn brute_mspd(
        est: &RigidPose<f64>,
        gt: &RigidPose<f64>,
        xs: &[[f64; 3]],
        syms: &[RigidPose<f64>],
        k: &CameraIntrinsics<f64>,
        w: u32,
    ) -> f64 {
        let proj = |p: [f64; 3]| (k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy);
        let (e, g) = (mat(est), mat(gt));
        syms.iter()
            .map(|s| {
                let s = mat(s);
                xs.iter()
                    .map(|x| {
                        let a = proj(apply(&e, x));
                        let b = proj(apply(&g, &apply(&s, x)));
                        640.0 / w as f64 * ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn random_pose(rng: &mut impl Rng, z: f64) -> RigidPose<f64> {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        RigidPose::from_axis_angle(
            &axis,
            rng.random_range(0.0..std::f64::consts::PI),
            Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), z + rng.random_range(-0.05..0.05)),
        )
    }

    #[test]
    fn equal_poses_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<Vec3<f64>> = (0..30).map(|_| Vec3::new(rng.random_range(-0.05..0.05), 0.01, 0.02)).collect();
        let p = random_pose(&mut rng, 1.0);
        let syms = cube_rotations();
        assert_eq!(mssd_points(&p, &p, &xs, &syms).unwrap(), 0.0);
        let k = CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap();
        assert_eq!(mspd_points(&p, &p, &xs, &syms, &k, 640).unwrap(), 0.0);
    }

    #[test]
    fn translation_offset_is_exact() {
        let xs: Vec<Vec3<f64>> = vec![Vec3::new(0.01, 0.02, 0.03), Vec3::new(-0.04, 0.0, 0.01)];
        let gt = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let t = Vec3::new(0.003, -0.004, 0.0);
        let est = RigidPose::from_translation(t).compose(&gt);
        let d = mssd_points(&est, &gt, &xs, &[RigidPose::identity()]).unwrap();
        assert!((d - 0.005).abs() < 1e-15);
    }

    #[test]
    fn width_640_means_no_rescale() {
        let xs: Vec<Vec3<f64>> = vec![Vec3::new(0.0, 0.0, 0.0)];
        let gt = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let est = RigidPose::from_translation(Vec3::new(0.01, 0.0, 1.0));
        let k = CameraIntrinsics::new(500.0, 500.0, 100.0, 100.0, 640, 480).unwrap();
        let id = [RigidPose::identity()];
        assert!((mspd_points(&est, &gt, &xs, &id, &k, 640).unwrap() - 5.0).abs() < 1e-12);
        assert!((mspd_points(&est, &gt, &xs, &id, &k, 320).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let id = [RigidPose::<f64>::identity()];
        assert!(mssd_points(&id[0], &id[0], &[], &id).is_err());
        let k = CameraIntrinsics::new(500.0, 500.0, 100.0, 100.0, 640, 480).unwrap();
        let behind = RigidPose::from_translation(Vec3::new(0.0, 0.0, -1.0));
        assert!(matches!(
            mspd_points(&behind, &id[0], &[Vec3::new(0.0, 0.0, 1.0)], &id, &k, 640),
            Err(EvalError::BehindCamera)
        ));
        let m = ObjectModel::new(1, PointCloud::new(vec![Vec3::new(0.0, 0.0, 0.0)]).unwrap(), 0.1, vec![]).unwrap();
        assert_eq!(mssd(&id[0], &id[0], &m).unwrap(), 0.0);
    }

    #[test]
    fn random_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = CameraIntrinsics::new(550.0, 540.0, 320.0, 240.0, 640, 480).unwrap();
        let group = cube_rotations();
        for _ in 0..200 {
            let n = rng.random_range(1..=50);
            let xs: Vec<[f64; 3]> = (0..n)
                .map(|_| [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)])
                .collect();
            let vs: Vec<Vec3<f64>> = xs.iter().map(|x| Vec3::from_array(*x)).collect();
            let n_sym = rng.random_range(1..=8);
            let syms: Vec<RigidPose<f64>> = (0..n_sym).map(|_| group[rng.random_range(0..24)]).collect();
            let (est, gt) = (random_pose(&mut rng, 1.0), random_pose(&mut rng, 1.0));
            let a = mssd_points(&est, &gt, &vs, &syms).unwrap();
            assert!((a - brute_mssd(&est, &gt, &xs, &syms)).abs() < 1e-9);
            let w = [640, 320, 1280][rng.random_range(0..3)];
            let b = mspd_points(&est, &gt, &vs, &syms, &k, w).unwrap();
            assert!((b - brute_mspd(&est, &gt, &xs, &syms, &k, w)).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn mssd_invariant_to_group_symmetry(seed in 0u64..10_000, s in 0usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let group = cube_rotations();
            // Orbits of random points, so the vertex set is group-invariant.
            let xs: Vec<Vec3<f64>> = (0..4)
                .flat_map(|_| {
                    let x = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
                    group.iter().map(move |g| g.transform_point(&x)).collect::<Vec<_>>()
                })
                .collect();
            let (est, gt) = (random_pose(&mut rng, 1.0), random_pose(&mut rng, 1.0));
            let a = mssd_points(&est, &gt, &xs, &group).unwrap();
            let b = mssd_points(&est.compose(&group[s]), &gt, &xs, &group).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
