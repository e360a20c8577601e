//! Random multi-object RGB-D scenes rendered by point splatting.

use ppf_core::cloud::{ObjectModel, Rgb};
use ppf_core::geom::{CameraIntrinsics, Quaternion, RigidPose, UnitVec3, Vec3};
use ppf_core::image::{BinaryMask, ColorImage, DepthMap};
use ppf_core::render::{splat_points, SplatBuffer, SplatOptions};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SynthError};

pub const PLACEMENT_TRIES: usize = 1000;
/// Splat radius in units of the model sample spacing.
pub const SPLAT_RADIUS_SCALE: f64 = ppf_core::render::SURFEL_RADIUS_SCALE;
/// Millimeters per raw depth unit of rendered depth maps.
pub const DEPTH_SCALE: f64 = 0.1;

/// Infinite textured plane behind the objects.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundPlane {
    /// Any point on the plane, camera frame.
    pub point: Vec3<f64>,
    /// Normal, oriented toward the camera.
    pub normal: UnitVec3<f64>,
    /// Checkerboard colors and square size in meters.
    pub colors: [Rgb; 2],
    pub checker: f64,
}

impl BackgroundPlane {
    /// Plane through `(0, 0, depth)` tilted by `tilt` radians about the
    /// camera x axis.
    pub fn tilted(depth: f64, tilt: f64) -> Self {
        Self {
            point: Vec3::new(0.0, 0.0, depth),
            normal: UnitVec3::new_normalize(Vec3::new(0.0, tilt.sin(), -tilt.cos())).expect("unit"),
            colors: [[150, 140, 120], [110, 100, 90]],
            checker: 0.05,
        }
    }

    /// Signed distance, positive on the camera side.
    pub fn signed_distance(&self, p: &Vec3<f64>) -> f64 {
        self.normal.dot(&(*p - self.point))
    }

    fn hit(&self, ray: &Vec3<f64>) -> Option<f64> {
        let denom = self.normal.dot(ray);
        if denom.abs() < 1e-12 {
            return None;
        }
        // Ray points are `z * ray`; solve n . (z ray - p0) = 0.
        let z = self.normal.dot(&self.point) / denom;
        (z > 0.0).then_some(z)
    }

    fn color_at(&self, p: &Vec3<f64>) -> Rgb {
        let n = self.normal.as_vec();
        let helper = if n.x.abs() < 0.9 { Vec3::x_axis() } else { Vec3::y_axis() };
        let e1 = n.cross(&helper).try_normalize().expect("helper not parallel");
        let e2 = n.cross(&e1);
        let d = *p - self.point;
        let (a, b) = ((d.dot(&e1) / self.checker).floor() as i64, (d.dot(&e2) / self.checker).floor() as i64);
        self.colors[((a + b).rem_euclid(2)) as usize]
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec<'a> {
    /// Each object instance picks one of these uniformly.
    pub models: &'a [ObjectModel<f64>],
    pub n_objects: usize,
    pub camera: CameraIntrinsics<f64>,
    /// Standard deviation of additive depth noise, meters.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Range of bounding-sphere center depths, meters.
    pub z_range: (f64, f64),
    pub plane: Option<BackgroundPlane>,
}

impl<'a> SceneSpec<'a> {
    pub fn new(models: &'a [ObjectModel<f64>], n_objects: usize, camera: CameraIntrinsics<f64>, noise_sigma: f64, seed: u64) -> Self {
        Self {
            models,
            n_objects,
            camera,
            noise_sigma,
            seed,
            z_range: (0.5, 1.5),
            plane: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(SynthError::Empty("scene models"));
        }
        if self.n_objects == 0 {
            return Err(SynthError::InvalidArgument("n_objects must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(SynthError::InvalidArgument(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        let (lo, hi) = self.z_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(SynthError::InvalidArgument(format!("bad depth range [{lo}, {hi}]")));
        }
        if self.models.iter().any(|m| !m.cloud().has_normals()) {
            return Err(SynthError::InvalidArgument("scene models need normals".into()));
        }
        self.camera.validate()?;
        Ok(())
    }
}

/// Ground truth of one rendered instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceGt {
    pub object_id: u32,
    /// Index into [`SceneSpec::models`].
    pub model_index: usize,
    pub pose: RigidPose<f64>,
    /// Pixels where this instance is the nearest surface.
    pub mask: BinaryMask,
    /// Visible pixels over pixels the instance covers when rendered alone.
    pub visib_fract: f64,
    pub px_count_all: u64,
    pub px_count_visib: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub depth: DepthMap,
    pub rgb: ColorImage,
    pub camera: CameraIntrinsics<f64>,
    pub instances: Vec<InstanceGt>,
}

/// Uniformly distributed rotation.
pub fn random_rotation(rng: &mut impl Rng) -> Quaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    Quaternion::new(a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos()).normalized()
}

/// Bounding-sphere center and radius in model coordinates.
pub fn bounding_sphere(model: &ObjectModel<f64>) -> (Vec3<f64>, f64) {
    let (lo, hi) = model.cloud().bounds().expect("models are nonempty");
    let c = (lo + hi) * 0.5;
    let r = model.cloud().points().iter().map(|p| p.distance(&c)).fold(0.0, f64::max);
    (c, r)
}

/// Whether a sphere lies inside the four side planes of the view frustum.
fn sphere_in_frustum(k: &CameraIntrinsics<f64>, c: &Vec3<f64>, r: f64) -> bool {
    // Side planes x = a z through the optical center, as (a, sign).
    let bounds = [
        (-k.cx / k.fx, c.x, 1.0),
        ((k.width as f64 - k.cx) / k.fx, c.x, -1.0),
        (-k.cy / k.fy, c.y, 1.0),
        ((k.height as f64 - k.cy) / k.fy, c.y, -1.0),
    ];
    c.z > r
        && bounds
            .iter()
            .all(|&(a, x, s)| s * (x - a * c.z) / (1.0 + a * a).sqrt() >= r)
}

struct Placed {
    model_index: usize,
    pose: RigidPose<f64>,
}

fn place(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Placed>> {
    let k = &spec.camera;
    let mut spheres: Vec<(Vec3<f64>, f64)> = Vec::new();
    let mut out = Vec::new();
    for index in 0..spec.n_objects {
        let model_index = rng.random_range(0..spec.models.len());
        let (c_model, r) = bounding_sphere(&spec.models[model_index]);
        let mut placed = None;
        for _ in 0..PLACEMENT_TRIES {
            let q = random_rotation(rng);
            let z = rng.random_range(spec.z_range.0..=spec.z_range.1);
            let x = rng.random_range(-k.cx / k.fx..=(k.width as f64 - k.cx) / k.fx) * z;
            let y = rng.random_range(-k.cy / k.fy..=(k.height as f64 - k.cy) / k.fy) * z;
            let c = Vec3::new(x, y, z);
            if !sphere_in_frustum(k, &c, r) {
                continue;
            }
            if spheres.iter().any(|(o, ro)| o.distance(&c) <= r + ro) {
                continue;
            }
            if spec.plane.as_ref().is_some_and(|p| p.signed_distance(&c) < r) {
                continue;
            }
            placed = Some((RigidPose::new(q, c - q.rotate(&c_model)), c));
            break;
        }
        let (pose, c) = placed.ok_or(SynthError::Placement {
            index,
            tries: PLACEMENT_TRIES,
        })?;
        spheres.push((c, r));
        out.push(Placed { model_index, pose });
    }
    Ok(out)
}

fn splat_instance(model: &ObjectModel<f64>, pose: &RigidPose<f64>, k: &CameraIntrinsics<f64>) -> Result<SplatBuffer<f64>> {
    let pts: Vec<Vec3<f64>> = model.cloud().points().iter().map(|p| pose.transform_point(p)).collect();
    let normals: Vec<UnitVec3<f64>> = model
        .cloud()
        .normals()
        .expect("validated")
        .iter()
        .map(|n| pose.transform_normal(n))
        .collect();
    let opts = SplatOptions {
        spacing: model.point_spacing(),
        radius_scale: SPLAT_RADIUS_SCALE,
        plane_depth: true,
    };
    Ok(splat_points(&pts, Some(&normals), k, &opts)?)
}

const NONE: u32 = u32::MAX;
const PLANE: u32 = u32::MAX - 1;

/// Places `spec.n_objects` objects at random poses with disjoint bounding
/// spheres inside the view frustum, renders depth and color with a z-buffer,
/// adds Gaussian depth noise and quantizes depth at 0.1 mm per unit.
/// Output is a pure function of the spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let placed = place(spec, &mut rng)?;
    let k = &spec.camera;
    let (w, h) = (k.width, k.height);
    let n_px = (w * h) as usize;
    let mut depth = vec![f64::INFINITY; n_px];
    let mut owner = vec![NONE; n_px];
    let mut buffers = Vec::with_capacity(placed.len());
    for (i, p) in placed.iter().enumerate() {
        let buf = splat_instance(&spec.models[p.model_index], &p.pose, k)?;
        for (px, &z) in buf.depth.iter().enumerate() {
            if z < depth[px] {
                depth[px] = z;
                owner[px] = i as u32;
            }
        }
        buffers.push(buf);
    }
    if let Some(plane) = &spec.plane {
        for v in 0..h {
            for u in 0..w {
                let px = (v * w + u) as usize;
                if let Some(z) = plane.hit(&k.ray(u as f64, v as f64)) {
                    if z < depth[px] {
                        depth[px] = z;
                        owner[px] = PLANE;
                    }
                }
            }
        }
    }

    let mut pixels = vec![[0u8; 3]; n_px];
    for (px, &o) in owner.iter().enumerate() {
        pixels[px] = match o {
            NONE => [0, 0, 0],
            PLANE => {
                let (u, v) = ((px as u32 % w) as f64, (px as u32 / w) as f64);
                spec.plane.as_ref().expect("plane owner").color_at(&k.backproject(u, v, depth[px]))
            }
            i => {
                let p = &placed[i as usize];
                let colors = spec.models[p.model_index].cloud().colors();
                colors.map_or([128, 128, 128], |c| c[buffers[i as usize].index[px] as usize])
            }
        };
    }

    let mut raw = vec![0u16; n_px];
    let quant = DepthMap::zeros(1, 1, DEPTH_SCALE);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| SynthError::InvalidArgument(e.to_string()))?;
    for (px, &z) in depth.iter().enumerate() {
        if z.is_finite() {
            let z = if spec.noise_sigma > 0.0 { z + noise.sample(&mut rng) } else { z };
            raw[px] = quant.quantize_meters(z);
        }
    }

    let instances = placed
        .iter()
        .zip(&buffers)
        .enumerate()
        .map(|(i, (p, buf))| {
            let mask = BinaryMask::from_fn(w, h, |u, v| owner[(v * w + u) as usize] == i as u32);
            let all = buf.index.iter().filter(|&&j| j != u32::MAX).count() as u64;
            let visib = mask.count() as u64;
            InstanceGt {
                object_id: spec.models[p.model_index].object_id,
                model_index: p.model_index,
                pose: p.pose,
                mask,
                visib_fract: if all == 0 { 0.0 } else { visib as f64 / all as f64 },
                px_count_all: all,
                px_count_visib: visib,
            }
        })
        .collect();

    Ok(SyntheticScene {
        depth: DepthMap::new(w, h, raw, DEPTH_SCALE)?,
        rgb: ColorImage::new(w, h, pixels)?,
        camera: *k,
        instances,
    })
}

/// Independent per-item seed derived from a master seed.
pub fn item_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ppf_core::cloud::PointCloud;
    use ppf_core::depth::unproject_depth;
    use ppf_core::shapes::{box_model, l_bracket};

    fn camera() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(520.0, 520.0, 160.0, 120.0, 320, 240).unwrap()
    }

    fn sphere(id: u32, rad: f64, n: usize) -> ObjectModel<f64> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let dirs: Vec<Vec3<f64>> = (0..n)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                Vec3::new(r * th.cos(), y, r * th.sin())
            })
            .collect();
        let cloud = PointCloud::new(dirs.iter().map(|d| *d * rad).collect())
            .unwrap()
            .with_normals(dirs.iter().map(|d| UnitVec3::new_normalize(*d).unwrap()).collect())
            .unwrap()
            .with_colors(vec![[200, 50, 50]; n])
            .unwrap();
        ObjectModel::new(id, cloud, 2.0 * rad, vec![]).unwrap()
    }

    #[test]
    fn unprojected_depth_lies_on_the_surface() {
        let models = [sphere(1, 0.04, 6000)];
        for seed in 0..5 {
            let scene = generate_scene(&SceneSpec::new(&models, 1, camera(), 0.0, seed)).unwrap();
            let gt = &scene.instances[0];
            let center = gt.pose.translation();
            let cloud = unproject_depth(&scene.depth, &camera(), Some(&gt.mask), None).unwrap();
            assert!(cloud.len() > 100);
            for p in cloud.cloud.points() {
                assert!((p.distance(center) - 0.04).abs() < 1e-3, "{}", p.distance(center));
            }
        }
    }

    #[test]
    fn sphere_silhouette_is_covered_without_holes() {
        let models = [sphere(1, 0.04, 6000)];
        let k = camera();
        for seed in 0..5 {
            let scene = generate_scene(&SceneSpec::new(&models, 1, k, 0.0, seed)).unwrap();
            let gt = &scene.instances[0];
            let c = *gt.pose.translation();
            let truth = BinaryMask::from_fn(k.width, k.height, |u, v| {
                let d = k.ray(u as f64, v as f64);
                let d = d / d.norm();
                (c - d * d.dot(&c)).norm() <= 0.04
            });
            let inner = erode(&truth, 2);
            assert!(inner.bits.iter().zip(&gt.mask.bits).all(|(t, m)| !*t || *m), "hole inside silhouette");
            let inter = truth.bits.iter().zip(&gt.mask.bits).filter(|(a, b)| **a && **b).count();
            let union = truth.bits.iter().zip(&gt.mask.bits).filter(|(a, b)| **a || **b).count();
            assert!(inter as f64 / union as f64 > 0.95);
        }
    }

    #[test]
    fn box_faces_unproject_onto_the_box() {
        // Away from silhouette edges every pixel lies on the box surface.
        let models = [box_model::<f64>(2, Vec3::new(0.08, 0.06, 0.04), 0.003, [10, 200, 10]).unwrap()];
        let scene = generate_scene(&SceneSpec::new(&models, 1, camera(), 0.0, 7)).unwrap();
        let gt = &scene.instances[0];
        let inner = erode(&gt.mask, 2);
        let inv = gt.pose.inverse();
        let cloud = unproject_depth(&scene.depth, &camera(), Some(&inner), None).unwrap();
        assert!(cloud.len() > 100);
        for p in cloud.cloud.points() {
            let q = inv.transform_point(p);
            let sdf = (q.x.abs() - 0.04).max(q.y.abs() - 0.03).max(q.z.abs() - 0.02);
            assert!(sdf.abs() < 1e-3, "{sdf}");
        }
    }

    fn erode(m: &BinaryMask, r: i32) -> BinaryMask {
        BinaryMask::from_fn(m.width, m.height, |x, y| {
            (-r..=r).all(|dy| {
                (-r..=r).all(|dx| {
                    let (xx, yy) = (x as i32 + dx, y as i32 + dy);
                    xx >= 0 && yy >= 0 && (xx as u32) < m.width && (yy as u32) < m.height && m.get(xx as u32, yy as u32)
                })
            })
        })
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let models = [l_bracket::<f64>(1, 0.1, 0.005, [1, 2, 3]).unwrap(), sphere(2, 0.03, 2000)];
        let mut spec = SceneSpec::new(&models, 3, camera(), 0.002, 42);
        spec.plane = Some(BackgroundPlane::tilted(1.8, 0.3));
        let a = generate_scene(&spec).unwrap();
        assert_eq!(a, generate_scene(&spec).unwrap());
        spec.seed = 43;
        assert_ne!(a, generate_scene(&spec).unwrap());
    }

    #[test]
    fn masks_are_disjoint_and_counts_consistent() {
        let models = [l_bracket::<f64>(1, 0.12, 0.004, [1, 2, 3]).unwrap(), sphere(2, 0.05, 3000)];
        for seed in 0..10 {
            let mut spec = SceneSpec::new(&models, 3, camera(), 0.0, seed);
            spec.z_range = (0.5, 0.9);
            let s = generate_scene(&spec).unwrap();
            for (i, a) in s.instances.iter().enumerate() {
                assert!(a.px_count_visib <= a.px_count_all);
                assert!((0.0..=1.0).contains(&a.visib_fract));
                assert_eq!(a.mask.count() as u64, a.px_count_visib);
                for b in &s.instances[..i] {
                    assert!(!a.mask.bits.iter().zip(&b.mask.bits).any(|(x, y)| *x && *y));
                }
                // Every masked pixel has depth.
                for (px, &m) in a.mask.bits.iter().enumerate() {
                    assert!(!m || s.depth.raw[px] > 0);
                }
            }
        }
    }

    #[test]
    fn placements_respect_frustum_and_spacing() {
        let models = [sphere(1, 0.05, 500)];
        let spec = SceneSpec::new(&models, 4, camera(), 0.0, 3);
        let s = generate_scene(&spec).unwrap();
        let (c_model, r) = bounding_sphere(&models[0]);
        let centers: Vec<Vec3<f64>> = s.instances.iter().map(|a| a.pose.transform_point(&c_model)).collect();
        for (i, a) in s.instances.iter().enumerate() {
            let c = centers[i];
            assert!((0.5..=1.5).contains(&c.z));
            assert!(sphere_in_frustum(&camera(), &c, r));
            for b in &centers[..i] {
                assert!(c.distance(b) > 2.0 * r);
            }
            // Fully inside the image and unoccluded spheres are fully visible.
            assert!(a.px_count_all > 0);
        }
    }

    #[test]
    fn infeasible_spec_fails_placement() {
        let models = [sphere(1, 0.5, 100)];
        let err = generate_scene(&SceneSpec::new(&models, 2, camera(), 0.0, 1)).unwrap_err();
        assert!(matches!(err, SynthError::Placement { .. }), "{err}");
        assert!(generate_scene(&SceneSpec::new(&models, 0, camera(), 0.0, 1)).is_err());
        assert!(generate_scene(&SceneSpec::new(&models, 1, camera(), -1.0, 1)).is_err());
        assert!(generate_scene(&SceneSpec::new(&[], 1, camera(), 0.0, 1)).is_err());
    }

    #[test]
    fn plane_fills_background_behind_objects() {
        let models = [sphere(1, 0.04, 3000)];
        let mut spec = SceneSpec::new(&models, 1, camera(), 0.0, 5);
        spec.z_range = (0.6, 0.8);
        spec.plane = Some(BackgroundPlane::tilted(1.2, 0.2));
        let s = generate_scene(&spec).unwrap();
        assert!(s.depth.raw.iter().all(|&r| r > 0));
        let plane = spec.plane.as_ref().unwrap();
        let bg = BinaryMask::from_fn(320, 240, |u, v| !s.instances[0].mask.get(u, v));
        let cloud = unproject_depth(&s.depth, &camera(), Some(&bg), None).unwrap();
        for p in cloud.cloud.points() {
            assert!(plane.signed_distance(p).abs() < 1e-3);
        }
    }

    #[test]
    fn rotations_are_unit_and_seeds_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert!((random_rotation(&mut rng).norm() - 1.0).abs() < 1e-12);
        }
        assert_ne!(item_seed(1, 0), item_seed(1, 1));
        assert_eq!(item_seed(1, 5), item_seed(1, 5));
    }
}
