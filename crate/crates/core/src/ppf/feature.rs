use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{Quaternion, RigidPose, UnitVec3, Vec3};
use crate::scalar::Real;

/// Point-pair feature: pair distance and the three angles
/// `∠(n1, d)`, `∠(n2, d)`, `∠(n1, n2)`, each in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ppf<S> {
    pub distance: S,
    pub angle_n1_d: S,
    pub angle_n2_d: S,
    pub angle_n1_n2: S,
}

#[inline]
fn clamped_acos<S: Real>(c: S) -> S {
    c.max(-S::one()).min(S::one()).acos()
}

/// Feature of the oriented pair `(p1, n1) -> (p2, n2)`.
pub fn compute_ppf<S: Real>(p1: &Vec3<S>, n1: &UnitVec3<S>, p2: &Vec3<S>, n2: &UnitVec3<S>) -> Result<Ppf<S>> {
    let d = *p2 - *p1;
    let dist = d.norm();
    if !(dist > S::zero()) {
        return Err(Error::CoincidentPoints);
    }
    let dn = d / dist;
    Ok(Ppf {
        distance: dist,
        angle_n1_d: clamped_acos(n1.dot(&dn)),
        angle_n2_d: clamped_acos(n2.dot(&dn)),
        angle_n1_n2: clamped_acos(n1.dot(&n2.as_vec())),
    })
}

/// Four 16-bit bin indices packed as `distance | a1 | a2 | a3`, most
/// significant first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PpfKey(pub u64);

impl PpfKey {
    pub fn pack(bins: [u16; 4]) -> Self {
        Self(
            (bins[0] as u64) << 48 | (bins[1] as u64) << 32 | (bins[2] as u64) << 16 | bins[3] as u64,
        )
    }

    pub fn bins(&self) -> [u16; 4] {
        [
            (self.0 >> 48) as u16,
            (self.0 >> 32) as u16,
            (self.0 >> 16) as u16,
            self.0 as u16,
        ]
    }
}

/// Discretization of point-pair features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer<S> {
    pub dist_step: S,
    pub angle_step: S,
    pub n_angle: u32,
}

impl<S: Real> Quantizer<S> {
    /// Angle bins of width `π / n_angle`.
    pub fn new(dist_step: S, n_angle: u32) -> Result<Self> {
        if !(dist_step > S::zero()) || n_angle == 0 || n_angle > u16::MAX as u32 {
            return Err(Error::InvalidArgument(format!(
                "quantizer needs dist_step > 0 and 0 < n_angle < 2^16 (got {dist_step}, {n_angle})"
            )));
        }
        Ok(Self {
            dist_step,
            angle_step: S::PI() / S::from_u32(n_angle).unwrap(),
            n_angle,
        })
    }

    /// From an explicit angle step; `n_angle = ceil(π / angle_step)`.
    pub fn from_steps(dist_step: S, angle_step: S) -> Result<Self> {
        if !(angle_step > S::zero()) {
            return Err(Error::InvalidArgument(format!("angle step must be positive, got {angle_step}")));
        }
        // Absorb the rounding of steps like π/30.
        let n = (PI / angle_step.as_f64() - 1e-6).ceil().max(1.0);
        if n > u16::MAX as f64 {
            return Err(Error::InvalidArgument(format!("angle step {angle_step} too small")));
        }
        let mut q = Self::new(dist_step, n as u32)?;
        q.angle_step = angle_step;
        Ok(q)
    }

    #[inline]
    fn angle_bin(&self, a: S) -> u16 {
        let b = (a / self.angle_step).floor().to_u32().unwrap_or(0);
        b.min(self.n_angle - 1) as u16
    }

    #[inline]
    pub fn key(&self, f: &Ppf<S>) -> PpfKey {
        let d = (f.distance / self.dist_step)
            .floor()
            .to_u32()
            .unwrap_or(u32::MAX)
            .min(u16::MAX as u32) as u16;
        PpfKey::pack([
            d,
            self.angle_bin(f.angle_n1_d),
            self.angle_bin(f.angle_n2_d),
            self.angle_bin(f.angle_n1_n2),
        ])
    }
}

/// Bins `(floor(d/δd), floor(a1/δa), floor(a2/δa), floor(a3/δa))`; an angle
/// of exactly π lands in the top bin.
pub fn quantize_ppf<S: Real>(f: &Ppf<S>, dist_step: S, angle_step: S) -> Result<PpfKey> {
    Ok(Quantizer::from_steps(dist_step, angle_step)?.key(f))
}

/// Rigid motion taking a reference point to the origin and its normal onto
/// +x. The remaining freedom is a rotation about x, measured by
/// [`CanonicalFrame::alpha`].
#[derive(Debug, Clone, Copy)]
pub struct CanonicalFrame<S> {
    pub pose: RigidPose<S>,
}

impl<S: Real> CanonicalFrame<S> {
    pub fn new(p: &Vec3<S>, n: &UnitVec3<S>) -> Self {
        let x = Vec3::x_axis();
        let axis = n.cross(&x);
        let s = axis.norm();
        let c = n.dot(&x);
        let q = if s > S::tiny() {
            Quaternion::from_axis_angle(&axis, s.atan2(c))
        } else if c > S::zero() {
            Quaternion::identity()
        } else {
            Quaternion::from_axis_angle(&Vec3::y_axis(), S::PI())
        };
        let q = q.normalized();
        Self {
            pose: RigidPose::new(q, -q.rotate(p)),
        }
    }

    /// Rotation angle about +x that brings `p_other` (after this frame's
    /// transform) into the half-plane `z = 0, y >= 0`. In `(-π, π]`;
    /// zero for points on the normal axis.
    #[inline]
    pub fn alpha(&self, p_other: &Vec3<S>) -> S {
        let q = self.pose.transform_point(p_other);
        let r2 = q.y * q.y + q.z * q.z;
        let eps = S::tiny();
        if r2 <= eps * eps * q.norm_squared() || r2 == S::zero() {
            return S::zero();
        }
        let a = (-q.z).atan2(q.y);
        if a <= -S::PI() {
            S::PI()
        } else {
            a
        }
    }
}

/// Canonical-frame angle of `p_other` about the reference normal.
pub fn local_alpha<S: Real>(p_ref: &Vec3<S>, n_ref: &UnitVec3<S>, p_other: &Vec3<S>) -> S {
    CanonicalFrame::new(p_ref, n_ref).alpha(p_other)
}

/// Rotation about +x by `alpha`.
pub(crate) fn rot_x<S: Real>(alpha: S) -> RigidPose<S> {
    RigidPose::from_rotation(Quaternion::from_axis_angle(&Vec3::x_axis(), alpha))
}
