//! Procedural object models with normals, colors and symmetry sets.

use std::f64::consts::PI;

use crate::cloud::{cloud_diameter, ObjectModel, PointCloud, Rgb};
use crate::error::Result;
use crate::geom::{Quaternion, RigidPose, UnitVec3, Vec3};
use crate::scalar::Real;

struct Builder {
    points: Vec<Vec3<f64>>,
    normals: Vec<UnitVec3<f64>>,
    colors: Vec<Rgb>,
}

impl Builder {
    fn new() -> Self {
        Self {
            points: Vec::new(),
            normals: Vec::new(),
            colors: Vec::new(),
        }
    }

    fn push(&mut self, p: Vec3<f64>, n: Vec3<f64>, c: Rgb) {
        self.points.push(p);
        self.normals.push(UnitVec3::new_normalize(n).expect("nonzero normal"));
        self.colors.push(c);
    }

    /// Samples the six faces of the box `[lo, hi]` on a regular grid. `color`
    /// gets the face index and the face-local coordinates in `[0, 1)^2`.
    fn box_faces(
        &mut self,
        lo: Vec3<f64>,
        hi: Vec3<f64>,
        spacing: f64,
        keep: impl Fn(&Vec3<f64>) -> bool,
        color: impl Fn(usize, f64, f64) -> Rgb,
    ) {
        let (lo, hi) = (lo.to_array(), hi.to_array());
        for axis in 0..3 {
            let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
            let na = ((hi[a] - lo[a]) / spacing).round().max(1.0) as usize;
            let nb = ((hi[b] - lo[b]) / spacing).round().max(1.0) as usize;
            for (side, coord) in [(0usize, lo[axis]), (1, hi[axis])] {
                let face = axis * 2 + side;
                let sign = if side == 0 { -1.0 } else { 1.0 };
                for i in 0..na {
                    for j in 0..nb {
                        let (s, t) = ((i as f64 + 0.5) / na as f64, (j as f64 + 0.5) / nb as f64);
                        let mut p = [0.0; 3];
                        p[axis] = coord;
                        p[a] = lo[a] + s * (hi[a] - lo[a]);
                        p[b] = lo[b] + t * (hi[b] - lo[b]);
                        let p = Vec3::from_array(p);
                        if !keep(&p) {
                            continue;
                        }
                        let mut n = [0.0; 3];
                        n[axis] = sign;
                        self.push(p, Vec3::from_array(n), color(face, s, t));
                    }
                }
            }
        }
    }

    fn finish<S: Real>(self, object_id: u32, symmetries: Vec<RigidPose<f64>>) -> Result<ObjectModel<S>> {
        let cloud = PointCloud::new(self.points)?
            .with_normals(self.normals)?
            .with_colors(self.colors)?;
        let diameter = cloud_diameter(cloud.points());
        Ok(ObjectModel::new(object_id, cloud, diameter, symmetries)?.cast())
    }
}

fn half_turn(axis: Vec3<f64>) -> RigidPose<f64> {
    RigidPose::from_axis_angle(&axis, PI, Vec3::zeros())
}

/// The proper symmetries of a box with three distinct side lengths.
pub fn box_symmetries() -> Vec<RigidPose<f64>> {
    vec![
        RigidPose::identity(),
        half_turn(Vec3::x_axis()),
        half_turn(Vec3::y_axis()),
        half_turn(Vec3::z_axis()),
    ]
}

/// The 24 rotations mapping a cube onto itself.
pub fn cube_rotations() -> Vec<RigidPose<f64>> {
    let mut out: Vec<Quaternion<f64>> = Vec::new();
    let gens = [
        Quaternion::from_axis_angle(&Vec3::x_axis(), PI / 2.0),
        Quaternion::from_axis_angle(&Vec3::y_axis(), PI / 2.0),
    ];
    let mut frontier = vec![Quaternion::identity()];
    out.push(Quaternion::identity());
    while let Some(q) = frontier.pop() {
        for g in &gens {
            let r = g.mul_quat(&q).normalized();
            if !out.iter().any(|o| o.dot(&r).abs() > 1.0 - 1e-9) {
                out.push(r);
                frontier.push(r);
            }
        }
    }
    out.into_iter().map(RigidPose::from_rotation).collect()
}

/// Solid box of side lengths `dims` centered at the origin, flat `color`.
pub fn box_model<S: Real>(object_id: u32, dims: Vec3<f64>, spacing: f64, color: Rgb) -> Result<ObjectModel<S>> {
    let h = dims * 0.5;
    let mut b = Builder::new();
    b.box_faces(-h, h, spacing, |_| true, |_, _, _| color);
    b.finish(object_id, box_symmetries())
}

/// L-shaped bracket with no proper symmetry, centered on its bounding box.
pub fn l_bracket<S: Real>(object_id: u32, size: f64, spacing: f64, color: Rgb) -> Result<ObjectModel<S>> {
    let (l, t, w) = (size, size * 0.3, size * 0.4);
    let a = (Vec3::new(0.0, 0.0, 0.0), Vec3::new(l, t, w));
    let b = (Vec3::new(0.0, 0.0, 0.0), Vec3::new(t, l * 0.75, w));
    let center = Vec3::new(l, l * 0.75, w) * 0.5;
    let strictly_inside = |p: &Vec3<f64>, (lo, hi): (Vec3<f64>, Vec3<f64>)| {
        (0..3).all(|i| p[i] > lo[i] + 1e-12 && p[i] < hi[i] - 1e-12)
    };
    let mut m = Builder::new();
    m.box_faces(a.0, a.1, spacing, |p| !strictly_inside(p, b), |_, _, _| color);
    m.box_faces(b.0, b.1, spacing, |p| !strictly_inside(p, a) && p.y >= t - 1e-12, |_, _, _| color);
    for p in &mut m.points {
        *p -= center;
    }
    m.finish(object_id, vec![RigidPose::identity()])
}

/// Closed cylinder about z, centered at the origin. Symmetries are the
/// continuous axis discretized into `steps` rotations, each also with the
/// end-over-end flip.
pub fn cylinder<S: Real>(
    object_id: u32,
    radius: f64,
    height: f64,
    spacing: f64,
    steps: usize,
    color: Rgb,
) -> Result<ObjectModel<S>> {
    let mut b = Builder::new();
    let n_around = ((2.0 * PI * radius / spacing).round() as usize).max(8);
    let n_up = ((height / spacing).round() as usize).max(1);
    for i in 0..n_around {
        let th = 2.0 * PI * (i as f64 + 0.5) / n_around as f64;
        for j in 0..n_up {
            let z = -height / 2.0 + height * (j as f64 + 0.5) / n_up as f64;
            b.push(
                Vec3::new(radius * th.cos(), radius * th.sin(), z),
                Vec3::new(th.cos(), th.sin(), 0.0),
                color,
            );
        }
    }
    let n_rings = ((radius / spacing).round() as usize).max(1);
    for k in 0..n_rings {
        let r = radius * (k as f64 + 0.5) / n_rings as f64;
        let n = ((2.0 * PI * r / spacing).round() as usize).max(3);
        for i in 0..n {
            let th = 2.0 * PI * (i as f64 + 0.5) / n as f64;
            for s in [-1.0, 1.0] {
                b.push(
                    Vec3::new(r * th.cos(), r * th.sin(), s * height / 2.0),
                    Vec3::new(0.0, 0.0, s),
                    color,
                );
            }
        }
    }
    let mut syms = Vec::with_capacity(2 * steps);
    for flip in [false, true] {
        for k in 0..steps {
            let rz = RigidPose::from_axis_angle(&Vec3::z_axis(), 2.0 * PI * k as f64 / steps as f64, Vec3::zeros());
            syms.push(if flip { rz.compose(&half_turn(Vec3::x_axis())) } else { rz });
        }
    }
    b.finish(object_id, syms)
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Rectangles drawn on each face of [`textured_cube`].
pub const CUBE_FACE_PATCHES: usize = 6;

/// Cube of side `size` whose faces carry randomly placed colored rectangles
/// on a light background. The layout has no symmetry of its own, so every
/// one of the cube's 24 rotations looks different.
pub fn textured_cube<S: Real>(object_id: u32, size: f64, spacing: f64, seed: u64) -> Result<ObjectModel<S>> {
    let mut state = seed;
    let mut unit = || (splitmix(&mut state) >> 11) as f64 / (1u64 << 53) as f64;
    let mut bases = Vec::new();
    let mut patches = Vec::new();
    for _ in 0..6 {
        bases.push([190 + (unit() * 60.0) as u8, 190 + (unit() * 60.0) as u8, 190 + (unit() * 60.0) as u8]);
        let face: Vec<([f64; 4], Rgb)> = (0..CUBE_FACE_PATCHES)
            .map(|_| {
                let (w, h) = (0.12 + 0.2 * unit(), 0.12 + 0.2 * unit());
                let (s0, t0) = (0.05 + unit() * (0.9 - w), 0.05 + unit() * (0.9 - h));
                let c = [(unit() * 150.0) as u8, (unit() * 150.0) as u8, (unit() * 150.0) as u8];
                ([s0, t0, s0 + w, t0 + h], c)
            })
            .collect();
        patches.push(face);
    }
    let h = size / 2.0;
    let mut b = Builder::new();
    b.box_faces(
        Vec3::new(-h, -h, -h),
        Vec3::new(h, h, h),
        spacing,
        |_| true,
        |face, s, t| {
            patches[face]
                .iter()
                .rev()
                .find(|(r, _)| s >= r[0] && s < r[2] && t >= r[1] && t < r[3])
                .map_or(bases[face], |(_, c)| *c)
        },
    );
    b.finish(object_id, cube_rotations())
}
