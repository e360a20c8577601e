//! Rigid-body primitives: vectors, unit quaternions, rigid poses and pinhole intrinsics.
//!
//! Rotations are stored as unit quaternions. `q` and `-q` describe the same
//! rotation; every comparison in this module goes through
//! [`RigidPose::rotation_angle_to`], which is invariant to that sign.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Vec3<S> {
    #[inline]
    pub const fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zeros() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    #[inline]
    pub fn from_f64(x: f64, y: f64, z: f64) -> Self {
        Self::new(S::lit(x), S::lit(y), S::lit(z))
    }

    #[inline]
    pub fn x_axis() -> Self {
        Self::new(S::one(), S::zero(), S::zero())
    }

    #[inline]
    pub fn y_axis() -> Self {
        Self::new(S::zero(), S::one(), S::zero())
    }

    #[inline]
    pub fn z_axis() -> Self {
        Self::new(S::zero(), S::zero(), S::one())
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(&self) -> S {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> S {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(&self, o: &Self) -> S {
        (*self - *o).norm()
    }

    #[inline]
    pub fn distance_squared(&self, o: &Self) -> S {
        (*self - *o).norm_squared()
    }

    /// Returns `None` for (numerically) zero vectors.
    pub fn try_normalize(&self) -> Option<Self> {
        let n = self.norm();
        if n > S::min_positive_value().sqrt() && n.is_finite() {
            Some(*self / n)
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [S; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn cast<T: Real>(&self) -> Vec3<T> {
        Vec3::new(
            T::lit(self.x.as_f64()),
            T::lit(self.y.as_f64()),
            T::lit(self.z.as_f64()),
        )
    }

    /// Unsigned angle to `o` in `[0, pi]`. Both vectors must be nonzero.
    pub fn angle_to(&self, o: &Self) -> S {
        let c = self.cross(o).norm();
        let d = self.dot(o);
        c.atan2(d)
    }

    pub fn lerp(&self, o: &Self, t: S) -> Self {
        *self + (*o - *self) * t
    }
}

impl<S: Real> Add for Vec3<S> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Real> AddAssign for Vec3<S> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Real> Sub for Vec3<S> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Real> SubAssign for Vec3<S> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Real> Mul<S> for Vec3<S> {
    type Output = Self;
    #[inline]
    fn mul(self, s: S) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<S: Real> Div<S> for Vec3<S> {
    type Output = Self;
    #[inline]
    fn div(self, s: S) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<S: Real> Neg for Vec3<S> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<S> Index<usize> for Vec3<S> {
    type Output = S;
    fn index(&self, i: usize) -> &S {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// A direction with Euclidean norm 1 (within 1e-6).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVec3<S>(Vec3<S>);

impl<S: Real> UnitVec3<S> {
    /// Normalizes `v`; fails on zero or non-finite input.
    pub fn new_normalize(v: Vec3<S>) -> Result<Self> {
        v.try_normalize()
            .map(Self)
            .ok_or_else(|| Error::InvalidArgument("cannot normalize zero-length vector".into()))
    }

    /// Wraps `v` without normalizing. Caller guarantees unit norm.
    #[inline]
    pub fn new_unchecked(v: Vec3<S>) -> Self {
        debug_assert!(
            (v.norm() - S::one()).abs() <= S::lit(1e-3),
            "UnitVec3::new_unchecked on non-unit {v:?}"
        );
        Self(v)
    }

    pub fn x_axis() -> Self {
        Self(Vec3::x_axis())
    }

    pub fn y_axis() -> Self {
        Self(Vec3::y_axis())
    }

    pub fn z_axis() -> Self {
        Self(Vec3::z_axis())
    }

    #[inline]
    pub fn as_vec(&self) -> Vec3<S> {
        self.0
    }

    #[inline]
    pub fn dot(&self, o: &Vec3<S>) -> S {
        self.0.dot(o)
    }

    pub fn flipped(&self) -> Self {
        Self(-self.0)
    }

    pub fn cast<T: Real>(&self) -> UnitVec3<T> {
        UnitVec3(self.0.cast())
    }
}

impl<S: Real> std::ops::Deref for UnitVec3<S> {
    type Target = Vec3<S>;
    fn deref(&self) -> &Vec3<S> {
        &self.0
    }
}

/// Row-major 3x3 matrix, used for I/O and oracles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<S>(pub [[S; 3]; 3]);

impl<S: Real> Mat3<S> {
    pub fn identity() -> Self {
        let (o, z) = (S::one(), S::zero());
        Self([[o, z, z], [z, o, z], [z, z, o]])
    }

    pub fn from_row_major(v: &[S]) -> Self {
        assert!(v.len() >= 9);
        Self([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn to_row_major(&self) -> [S; 9] {
        let m = &self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn mul_vec(&self, v: &Vec3<S>) -> Vec3<S> {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut r = [[S::zero(); 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Self(r)
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Self([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn trace(&self) -> S {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }
}

/// Quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion<S> {
    pub w: S,
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Quaternion<S> {
    pub const fn new(w: S, x: S, y: S, z: S) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(S::one(), S::zero(), S::zero(), S::zero())
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    /// A zero axis gives the identity.
    pub fn from_axis_angle(axis: &Vec3<S>, angle: S) -> Self {
        match axis.try_normalize() {
            Some(a) => {
                let half = angle * S::lit(0.5);
                let s = half.sin();
                Self::new(half.cos(), a.x * s, a.y * s, a.z * s)
            }
            None => Self::identity(),
        }
    }

    /// Rotation vector (axis * angle) to quaternion, exact for any magnitude.
    pub fn from_rotation_vector(v: &Vec3<S>) -> Self {
        let theta = v.norm();
        if theta < S::lit(1e-4) {
            // Taylor expansion of sin(theta/2)/theta around 0.
            let t2 = theta * theta;
            let k = S::lit(0.5) - t2 / S::lit(48.0);
            let w = S::one() - t2 / S::lit(8.0);
            Self::new(w, v.x * k, v.y * k, v.z * k).normalized()
        } else {
            Self::from_axis_angle(v, theta)
        }
    }

    #[inline]
    pub fn vector(&self) -> Vec3<S> {
        Vec3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> S {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> S {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn negated(&self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * o` (apply `o` first).
    pub fn mul_quat(&self, o: &Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotates `v`; assumes unit norm.
    #[inline]
    pub fn rotate(&self, v: &Vec3<S>) -> Vec3<S> {
        let u = self.vector();
        let two = S::lit(2.0);
        let t = u.cross(v) * two;
        *v + t * self.w + u.cross(&t)
    }

    /// Rotation angle in `[0, pi]`, invariant to the sign of the quaternion.
    pub fn angle(&self) -> S {
        let two = S::lit(2.0);
        two * self.vector().norm().atan2(self.w.abs())
    }

    pub fn to_matrix(&self) -> Mat3<S> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        let one = S::one();
        let two = S::lit(2.0);
        Mat3([
            [
                one - two * (y * y + z * z),
                two * (x * y - w * z),
                two * (x * z + w * y),
            ],
            [
                two * (x * y + w * z),
                one - two * (x * x + z * z),
                two * (y * z - w * x),
            ],
            [
                two * (x * z - w * y),
                two * (y * z + w * x),
                one - two * (x * x + y * y),
            ],
        ])
    }

    /// Converts a rotation matrix (Shepperd's method). The input is not
    /// re-orthonormalized; the result is normalized.
    pub fn from_matrix(m: &Mat3<S>) -> Self {
        let r = &m.0;
        let one = S::one();
        let quarter = S::lit(0.25);
        let two = S::lit(2.0);
        let tr = m.trace();
        let q = if tr > r[0][0] && tr > r[1][1] && tr > r[2][2] {
            let s = (one + tr).sqrt() * two;
            Self::new(
                quarter * s,
                (r[2][1] - r[1][2]) / s,
                (r[0][2] - r[2][0]) / s,
                (r[1][0] - r[0][1]) / s,
            )
        } else if r[0][0] > r[1][1] && r[0][0] > r[2][2] {
            let s = (one + r[0][0] - r[1][1] - r[2][2]).sqrt() * two;
            Self::new(
                (r[2][1] - r[1][2]) / s,
                quarter * s,
                (r[0][1] + r[1][0]) / s,
                (r[0][2] + r[2][0]) / s,
            )
        } else if r[1][1] > r[2][2] {
            let s = (one + r[1][1] - r[0][0] - r[2][2]).sqrt() * two;
            Self::new(
                (r[0][2] - r[2][0]) / s,
                (r[0][1] + r[1][0]) / s,
                quarter * s,
                (r[1][2] + r[2][1]) / s,
            )
        } else {
            let s = (one + r[2][2] - r[0][0] - r[1][1]).sqrt() * two;
            Self::new(
                (r[1][0] - r[0][1]) / s,
                (r[0][2] + r[2][0]) / s,
                (r[1][2] + r[2][1]) / s,
                quarter * s,
            )
        };
        q.normalized()
    }

    pub fn to_array(&self) -> [S; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn cast<T: Real>(&self) -> Quaternion<T> {
        Quaternion::new(
            T::lit(self.w.as_f64()),
            T::lit(self.x.as_f64()),
            T::lit(self.y.as_f64()),
            T::lit(self.z.as_f64()),
        )
        .normalized()
    }
}

/// Rigid transform `x -> R x + t` in SE(3); maps model coordinates into the
/// camera frame when used as an object pose. Translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidPose<S> {
    rotation: Quaternion<S>,
    translation: Vec3<S>,
}

impl<S: Real> Default for RigidPose<S> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<S: Real> RigidPose<S> {
    /// Builds a pose; the quaternion is renormalized.
    pub fn new(rotation: Quaternion<S>, translation: Vec3<S>) -> Self {
        Self {
            rotation: rotation.normalized(),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Quaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3<S>) -> Self {
        Self::new(Quaternion::identity(), t)
    }

    pub fn from_rotation(q: Quaternion<S>) -> Self {
        Self::new(q, Vec3::zeros())
    }

    pub fn from_axis_angle(axis: &Vec3<S>, angle: S, t: Vec3<S>) -> Self {
        Self::new(Quaternion::from_axis_angle(axis, angle), t)
    }

    /// From a row-major rotation matrix and a translation.
    pub fn from_matrix(r: &Mat3<S>, t: Vec3<S>) -> Self {
        Self::new(Quaternion::from_matrix(r), t)
    }

    #[inline]
    pub fn rotation(&self) -> &Quaternion<S> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vec3<S> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Mat3<S> {
        self.rotation.to_matrix()
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(
            self.rotation.mul_quat(&other.rotation),
            self.rotation.rotate(&other.translation) + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let q = self.rotation.conjugate();
        Self {
            rotation: q,
            translation: -q.rotate(&self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3<S>) -> Vec3<S> {
        self.rotation.rotate(p) + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec3<S>) -> Vec3<S> {
        self.rotation.rotate(v)
    }

    #[inline]
    pub fn transform_normal(&self, n: &UnitVec3<S>) -> UnitVec3<S> {
        UnitVec3::new_unchecked(self.rotation.rotate(&n.as_vec()))
    }

    /// Geodesic angle in `[0, pi]` between the two rotations.
    pub fn rotation_angle_to(&self, other: &Self) -> S {
        self.rotation.conjugate().mul_quat(&other.rotation).angle()
    }

    pub fn translation_distance(&self, other: &Self) -> S {
        self.translation.distance(&other.translation)
    }

    /// Pose equality up to the quaternion double cover.
    pub fn approx_eq(&self, other: &Self, rot_tol: S, trans_tol: S) -> bool {
        self.rotation_angle_to(other) <= rot_tol && self.translation_distance(other) <= trans_tol
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite()
            && self.rotation.to_array().iter().all(|c| c.is_finite())
    }

    pub fn cast<T: Real>(&self) -> RigidPose<T> {
        RigidPose::new(self.rotation.cast(), self.translation.cast())
    }
}

/// Free-function form of [`RigidPose::compose`]: `a ∘ b`.
pub fn compose<S: Real>(a: &RigidPose<S>, b: &RigidPose<S>) -> RigidPose<S> {
    a.compose(b)
}

pub fn invert<S: Real>(p: &RigidPose<S>) -> RigidPose<S> {
    p.inverse()
}

pub fn transform_point<S: Real>(p: &RigidPose<S>, x: &Vec3<S>) -> Vec3<S> {
    p.transform_point(x)
}

pub fn rotation_angle_between<S: Real>(a: &RigidPose<S>, b: &RigidPose<S>) -> S {
    a.rotation_angle_to(b)
}

/// Weighted chordal mean of unit quaternions: every input is sign-aligned
/// with the first one, then the weighted sum is normalized.
pub fn average_rotations<S: Real>(
    rotations: &[Quaternion<S>],
    weights: &[S],
) -> Result<Quaternion<S>> {
    let first = rotations
        .first()
        .ok_or(Error::Empty("average_rotations: no rotations"))?;
    if weights.len() != rotations.len() {
        return Err(Error::InvalidArgument(format!(
            "average_rotations: {} rotations but {} weights",
            rotations.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| *w < S::zero() || !w.is_finite()) {
        return Err(Error::InvalidArgument(
            "average_rotations: weights must be finite and nonnegative".into(),
        ));
    }
    let mut acc = [S::zero(); 4];
    for (q, &w) in rotations.iter().zip(weights) {
        let q = if q.dot(first) < S::zero() { q.negated() } else { *q };
        for (a, c) in acc.iter_mut().zip(q.to_array()) {
            *a += w * c;
        }
    }
    let mean = Quaternion::new(acc[0], acc[1], acc[2], acc[3]);
    let n = mean.norm();
    if !(n > S::zero()) {
        return Err(Error::InvalidArgument(
            "average_rotations: weights sum to zero".into(),
        ));
    }
    Ok(Quaternion::new(mean.w / n, mean.x / n, mean.y / n, mean.z / n))
}

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<S> {
    pub fx: S,
    pub fy: S,
    pub cx: S,
    pub cy: S,
    pub width: u32,
    pub height: u32,
}

impl<S: Real> CameraIntrinsics<S> {
    pub fn new(fx: S, fy: S, cx: S, cy: S, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > S::zero()
            && self.fy > S::zero()
            && self.width > 0
            && self.height > 0
            && self.cx >= S::zero()
            && self.cx < S::from_u32(self.width).unwrap()
            && self.cy >= S::zero()
            && self.cy < S::from_u32(self.height).unwrap();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid camera intrinsics {self:?}"
            )))
        }
    }

    /// Projects a camera-frame point; `None` when `z <= 0`.
    #[inline]
    pub fn project(&self, p: &Vec3<S>) -> Option<(S, S)> {
        if p.z > S::zero() {
            Some((
                self.fx * p.x / p.z + self.cx,
                self.fy * p.y / p.z + self.cy,
            ))
        } else {
            None
        }
    }

    /// Point at depth `z` on the ray through pixel `(u, v)`.
    #[inline]
    pub fn backproject(&self, u: S, v: S, z: S) -> Vec3<S> {
        Vec3::new(z * (u - self.cx) / self.fx, z * (v - self.cy) / self.fy, z)
    }

    /// Unit-depth ray direction through `(u, v)`.
    #[inline]
    pub fn ray(&self, u: S, v: S) -> Vec3<S> {
        self.backproject(u, v, S::one())
    }

    pub fn cast<T: Real>(&self) -> CameraIntrinsics<T> {
        CameraIntrinsics {
            fx: T::lit(self.fx.as_f64()),
            fy: T::lit(self.fy.as_f64()),
            cx: T::lit(self.cx.as_f64()),
            cy: T::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
        }
    }
}
