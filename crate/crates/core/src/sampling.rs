//! Voxel-grid downsampling.

use crate::cloud::{PointCloud, Rgb};
use crate::error::{Error, Result};
use crate::geom::{UnitVec3, Vec3};
use crate::scalar::Real;

/// Replaces the points of each occupied voxel (side `step`) by their
/// centroid, the renormalized mean normal and the mean color. Voxels are
/// emitted in ascending grid-index order.
pub fn voxel_downsample<S: Real>(cloud: &PointCloud<S>, step: S) -> Result<PointCloud<S>> {
    if !(step > S::zero()) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("voxel step must be positive, got {step}")));
    }
    let cell = |v: S| (v / step).floor().to_i64().unwrap_or(i64::MAX);
    let mut keyed: Vec<((i64, i64, i64), usize)> = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| ((cell(p.x), cell(p.y), cell(p.z)), i))
        .collect();
    keyed.sort_unstable();

    let normals = cloud.normals();
    let colors = cloud.colors();
    let mut out_pts = Vec::new();
    let mut out_normals = Vec::new();
    let mut out_colors: Vec<Rgb> = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let key = keyed[start].0;
        let mut end = start + 1;
        while end < keyed.len() && keyed[end].0 == key {
            end += 1;
        }
        let members = &keyed[start..end];
        let n = S::from_usize_lossy(members.len());
        let centroid = members
            .iter()
            .fold(Vec3::zeros(), |a, &(_, i)| a + cloud.points()[i])
            / n;
        out_pts.push(centroid);
        if let Some(ns) = normals {
            let sum = members.iter().fold(Vec3::zeros(), |a, &(_, i)| a + ns[i].as_vec());
            out_normals.push(match sum.try_normalize() {
                Some(v) => UnitVec3::new_unchecked(v),
                None => ns[members[0].1],
            });
        }
        if let Some(cs) = colors {
            let mut acc = [0u32; 3];
            for &(_, i) in members {
                for (a, c) in acc.iter_mut().zip(cs[i]) {
                    *a += c as u32;
                }
            }
            let m = members.len() as u32;
            out_colors.push(acc.map(|a| ((a + m / 2) / m) as u8));
        }
        start = end;
    }
    let mut out = PointCloud::new(out_pts)?;
    if normals.is_some() {
        out = out.with_normals(out_normals)?;
    }
    if colors.is_some() {
        out = out.with_colors(out_colors)?;
    }
    Ok(out)
}

/// A cloud together with the voxel step it was downsampled at.
#[derive(Debug, Clone)]
pub struct SampledCloud<S> {
    pub cloud: PointCloud<S>,
    pub step: S,
}

impl<S: Real> SampledCloud<S> {
    pub fn downsample(cloud: &PointCloud<S>, step: S) -> Result<Self> {
        Ok(Self {
            cloud: voxel_downsample(cloud, step)?,
            step,
        })
    }

    /// Declares `cloud` as already sampled at `step`.
    pub fn assume_sampled(cloud: PointCloud<S>, step: S) -> Self {
        Self { cloud, step }
    }
}
