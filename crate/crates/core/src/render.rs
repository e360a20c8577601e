//! Z-buffered disk splatting of colored point clouds.

use crate::cloud::{ObjectModel, Rgb};
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, RigidPose, UnitVec3, Vec3};
use crate::image::{disk_offsets, BinaryMask, ColorImage};
use crate::scalar::Real;

/// Per-pixel nearest splat: depth (`+inf` where empty) and the index of the
/// winning point (`u32::MAX` where empty).
#[derive(Debug, Clone, PartialEq)]
pub struct SplatBuffer<S> {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<S>,
    pub index: Vec<u32>,
}

impl<S: Real> SplatBuffer<S> {
    pub fn footprint(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            self.index[(y * self.width + x) as usize] != u32::MAX
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatOptions<S> {
    /// Sample spacing on the surface, meters.
    pub spacing: S,
    /// Splat radius in units of `spacing`.
    pub radius_scale: S,
    /// Render each point as an oriented disk of radius
    /// `radius_scale * spacing` in its tangent plane: a pixel is covered only
    /// where its ray hits the disk, at the depth of the hit. Needs normals.
    pub plane_depth: bool,
}

/// Pixel radius `max(1, round(radius_scale * spacing * fx / z))`.
#[inline]
pub fn splat_radius<S: Real>(opts: &SplatOptions<S>, fx: S, z: S) -> u32 {
    (opts.radius_scale * opts.spacing * fx / z)
        .round()
        .to_u32()
        .unwrap_or(1)
        .max(1)
}

/// Splats camera-frame points. Nearer depth wins; on equal depth the lower
/// index wins. Errors when every point has `z <= 0`.
pub fn splat_points<S: Real>(
    points: &[Vec3<S>],
    normals: Option<&[UnitVec3<S>]>,
    k: &CameraIntrinsics<S>,
    opts: &SplatOptions<S>,
) -> Result<SplatBuffer<S>> {
    let (w, h) = (k.width as i64, k.height as i64);
    let n_px = (w * h) as usize;
    let mut buf = SplatBuffer {
        width: k.width,
        height: k.height,
        depth: vec![S::infinity(); n_px],
        index: vec![u32::MAX; n_px],
    };
    if opts.plane_depth && normals.is_none() {
        return Err(Error::InvalidArgument("plane depth needs normals".into()));
    }
    let disk_r2 = (opts.radius_scale * opts.spacing).powi(2);
    let mut disks: Vec<Vec<(i32, i32)>> = Vec::new();
    let mut any_in_front = false;
    for (i, p) in points.iter().enumerate() {
        let Some((u, v)) = k.project(p) else { continue };
        any_in_front = true;
        let mut r = splat_radius(opts, k.fx, p.z) as usize;
        if opts.plane_depth {
            // Room for the projected disk; rays that miss it are skipped.
            r += 1;
        }
        if r >= disks.len() {
            disks.extend((disks.len()..=r).map(|r| disk_offsets(r as u32)));
        }
        let (cu, cv) = (u.round().to_i64().unwrap_or(i64::MIN / 2), v.round().to_i64().unwrap_or(i64::MIN / 2));
        if cu + (r as i64) < 0 || cv + (r as i64) < 0 || cu - (r as i64) >= w || cv - (r as i64) >= h {
            continue;
        }
        let plane = normals.filter(|_| opts.plane_depth).map(|ns| (ns[i].as_vec(), ns[i].dot(p)));
        for &(dx, dy) in &disks[r] {
            let (x, y) = (cu + dx as i64, cv + dy as i64);
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let mut z = p.z;
            if let Some((n, np)) = plane {
                let ray = k.ray(S::from_i64(x).unwrap(), S::from_i64(y).unwrap());
                let denom = n.dot(&ray);
                if denom.abs() <= S::lit(1e-9) {
                    continue;
                }
                z = np / denom;
                if z <= S::zero() || (ray * z).distance_squared(p) > disk_r2 {
                    continue;
                }
            }
            let at = (y * w + x) as usize;
            if z < buf.depth[at] {
                buf.depth[at] = z;
                buf.index[at] = i as u32;
            }
        }
    }
    if !any_in_front {
        return Err(Error::BehindCamera);
    }
    Ok(buf)
}

/// Rendered color, depth and footprint of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatRender<S> {
    pub color: ColorImage,
    /// Meters; `+inf` where the footprint is empty.
    pub depth: Vec<S>,
    pub mask: BinaryMask,
}

/// Surfel radius of [`splat_render`] in units of the model's sample spacing;
/// wide enough that neighboring disks overlap on a square grid.
pub const SURFEL_RADIUS_SCALE: f64 = 0.75;

/// Renders `model` at `pose`. Models with normals are drawn as oriented
/// disks of radius `0.75 * spacing`; without normals as screen-space splats
/// of radius `max(1, round(0.5 * spacing * fx / z))` pixels. `spacing` is
/// the model's sample spacing. Background is black.
pub fn splat_render<S: Real>(
    model: &ObjectModel<S>,
    pose: &RigidPose<S>,
    k: &CameraIntrinsics<S>,
) -> Result<SplatRender<S>> {
    let colors = model
        .cloud()
        .colors()
        .ok_or_else(|| Error::InvalidArgument(format!("object {} has no colors", model.object_id)))?;
    let pts: Vec<Vec3<S>> = model.cloud().points().iter().map(|p| pose.transform_point(p)).collect();
    let normals: Option<Vec<UnitVec3<S>>> = model
        .cloud()
        .normals()
        .map(|ns| ns.iter().map(|n| pose.transform_normal(n)).collect());
    let opts = SplatOptions {
        spacing: model.point_spacing(),
        radius_scale: S::lit(if normals.is_some() { SURFEL_RADIUS_SCALE } else { 0.5 }),
        plane_depth: normals.is_some(),
    };
    let buf = splat_points(&pts, normals.as_deref(), k, &opts)?;
    Ok(colorize(&buf, colors))
}

pub(crate) fn colorize<S: Real>(buf: &SplatBuffer<S>, colors: &[Rgb]) -> SplatRender<S> {
    let pixels = buf
        .index
        .iter()
        .map(|&i| if i == u32::MAX { [0, 0, 0] } else { colors[i as usize] })
        .collect();
    SplatRender {
        color: ColorImage::new(buf.width, buf.height, pixels).expect("sized from buffer"),
        depth: buf.depth.clone(),
        mask: buf.footprint(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;

    fn camera() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(500.0, 500.0, 80.0, 60.0, 160, 120).unwrap()
    }

    fn colored(points: Vec<Vec3<f64>>, colors: Vec<Rgb>) -> ObjectModel<f64> {
        let cloud = PointCloud::new(points).unwrap().with_colors(colors).unwrap();
        ObjectModel::new(1, cloud, 0.1, vec![]).unwrap()
    }

    #[test]
    fn single_point_splats_at_principal_point() {
        let m = colored(vec![Vec3::new(0.0, 0.0, 1.0)], vec![[255, 0, 0]]);
        let r = splat_render(&m, &RigidPose::identity(), &camera()).unwrap();
        assert_eq!(r.color.get(80, 60), [255, 0, 0]);
        assert_eq!(r.depth[60 * 160 + 80], 1.0);
        assert!(r.mask.get(80, 60));
        for (d, b) in r.depth.iter().zip(&r.mask.bits) {
            assert_eq!(d.is_finite(), *b);
        }
    }

    #[test]
    fn nearer_point_wins() {
        let m = colored(
            vec![Vec3::new(0.0, 0.0, 2.0), Vec3::new(0.0, 0.0, 1.0)],
            vec![[0, 0, 255], [0, 255, 0]],
        );
        let r = splat_render(&m, &RigidPose::identity(), &camera()).unwrap();
        assert_eq!(r.color.get(80, 60), [0, 255, 0]);
        assert_eq!(r.depth[60 * 160 + 80], 1.0);
    }

    #[test]
    fn object_behind_camera_fails() {
        let m = colored(vec![Vec3::new(0.0, 0.0, -1.0)], vec![[1, 2, 3]]);
        assert!(matches!(
            splat_render(&m, &RigidPose::identity(), &camera()),
            Err(Error::BehindCamera)
        ));
        let bare = ObjectModel::new(1, PointCloud::new(vec![Vec3::new(0.0, 0.0, 1.0)]).unwrap(), 0.1, vec![]).unwrap();
        assert!(splat_render(&bare, &RigidPose::identity(), &camera()).is_err());
    }

    #[test]
    fn sphere_footprint_matches_silhouette() {
        // Fibonacci sphere of radius 5 cm at 0.8 m.
        let (rad, n) = (0.05, 4000);
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vec3<f64>> = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                Vec3::new(r * th.cos(), y, r * th.sin()) * rad
            })
            .collect();
        let m = colored(pts, vec![[200, 200, 200]; n]);
        let center = Vec3::new(0.01, -0.02, 0.8);
        let k = camera();
        let r = splat_render(&m, &RigidPose::from_translation(center), &k).unwrap();
        // A pixel ray hits the sphere when its distance to the center is
        // at most the radius.
        let truth = BinaryMask::from_fn(k.width, k.height, |x, y| {
            let d = k.ray(x as f64, y as f64);
            let d = d / d.norm();
            let t = d.dot(&center);
            (center - d * t).norm() <= rad
        });
        let inter = r.mask.bits.iter().zip(&truth.bits).filter(|(a, b)| **a && **b).count();
        let union = r.mask.bits.iter().zip(&truth.bits).filter(|(a, b)| **a || **b).count();
        assert!(inter as f64 / union as f64 >= 0.9, "{inter}/{union}");
    }

    #[test]
    fn plane_depth_is_exact_on_planes() {
        let k = camera();
        // Tilted plane z = 1 + 0.3 x sampled every 4 mm.
        let n = UnitVec3::new_normalize(Vec3::new(-0.3, 0.0, 1.0)).unwrap();
        let mut pts = Vec::new();
        for i in -10..=10 {
            for j in -10..=10 {
                let (x, y) = (i as f64 * 0.004, j as f64 * 0.004);
                pts.push(Vec3::new(x, y, 1.0 + 0.3 * x));
            }
        }
        let normals = vec![n.flipped(); pts.len()];
        let opts = SplatOptions {
            spacing: 0.004,
            radius_scale: 0.75,
            plane_depth: true,
        };
        let buf = splat_points(&pts, Some(&normals), &k, &opts).unwrap();
        let mut checked = 0;
        for y in 0..k.height {
            for x in 0..k.width {
                let z = buf.depth[(y * k.width + x) as usize];
                if z.is_finite() {
                    let p = k.backproject(x as f64, y as f64, z);
                    assert!((p.z - 1.0 - 0.3 * p.x).abs() < 1e-9);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }
}
