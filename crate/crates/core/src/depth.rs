//! Depth-image unprojection and organized normal estimation.

use crate::cloud::{PointCloud, Rgb};
use crate::error::{Error, Result};
use crate::geom::{CameraIntrinsics, UnitVec3, Vec3};
use crate::image::{BinaryMask, ColorImage, DepthMap};
use crate::linalg::symmetric_eigen3;
use crate::scalar::Real;

/// Half-width of the normal-estimation window (5x5).
pub const NORMAL_WINDOW_RADIUS: i32 = 2;
/// Neighbors (excluding the center) needed for a plane fit.
pub const MIN_NORMAL_NEIGHBORS: usize = 6;
/// Neighbors whose depth differs from the center by more than this fraction
/// of the center depth are excluded from the fit.
pub const DEPTH_DISCONTINUITY_FRACTION: f64 = 0.02;

/// A cloud unprojected from a depth image, with the source pixel of each point.
#[derive(Debug, Clone)]
pub struct OrganizedCloud<S> {
    pub cloud: PointCloud<S>,
    /// `(u, v)` of each point.
    pub pixels: Vec<(u32, u32)>,
}

impl<S: Real> OrganizedCloud<S> {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }
}

#[inline]
fn unproject_pixel<S: Real>(depth: &DepthMap, k: &CameraIntrinsics<S>, u: u32, v: u32) -> Option<Vec3<S>> {
    depth
        .meters_at(u, v)
        .map(|z| k.backproject(S::from_u32(u).unwrap(), S::from_u32(v).unwrap(), S::lit(z)))
}

/// Unprojects every valid pixel (raw > 0) inside `mask` (all pixels when
/// `mask` is `None`). Colors are attached when `rgb` is given.
pub fn unproject_depth<S: Real>(
    depth: &DepthMap,
    k: &CameraIntrinsics<S>,
    mask: Option<&BinaryMask>,
    rgb: Option<&ColorImage>,
) -> Result<OrganizedCloud<S>> {
    if let Some(m) = mask {
        if !m.same_size(depth.width, depth.height) {
            return Err(Error::SizeMismatch(format!(
                "mask {}x{} vs depth {}x{}",
                m.width, m.height, depth.width, depth.height
            )));
        }
    }
    if let Some(c) = rgb {
        if c.width != depth.width || c.height != depth.height {
            return Err(Error::SizeMismatch(format!(
                "rgb {}x{} vs depth {}x{}",
                c.width, c.height, depth.width, depth.height
            )));
        }
    }
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    let mut colors: Vec<Rgb> = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            if mask.is_some_and(|m| !m.get(u, v)) {
                continue;
            }
            if let Some(p) = unproject_pixel(depth, k, u, v) {
                points.push(p);
                pixels.push((u, v));
                if let Some(c) = rgb {
                    colors.push(c.get(u, v));
                }
            }
        }
    }
    let mut cloud = PointCloud::new(points)?;
    if rgb.is_some() {
        cloud = cloud.with_colors(colors)?;
    }
    Ok(OrganizedCloud { cloud, pixels })
}

/// Per-point normals from a least-squares plane over the 5x5 pixel window of
/// the depth image. Neighbors across depth discontinuities are excluded;
/// points with fewer than six valid neighbors are dropped. Normals face the
/// camera (`n · p < 0`).
pub fn estimate_normals<S: Real>(
    depth: &DepthMap,
    k: &CameraIntrinsics<S>,
    organized: &OrganizedCloud<S>,
) -> Result<OrganizedCloud<S>> {
    let rel = S::lit(DEPTH_DISCONTINUITY_FRACTION);
    let (w, h) = (depth.width as i32, depth.height as i32);
    let mut keep = Vec::new();
    let mut normals = Vec::new();
    let mut nbrs: Vec<Vec3<S>> = Vec::with_capacity(25);
    for (idx, (&(u, v), p)) in organized
        .pixels
        .iter()
        .zip(organized.cloud.points())
        .enumerate()
    {
        let zc = p.z;
        nbrs.clear();
        nbrs.push(*p);
        for dv in -NORMAL_WINDOW_RADIUS..=NORMAL_WINDOW_RADIUS {
            for du in -NORMAL_WINDOW_RADIUS..=NORMAL_WINDOW_RADIUS {
                if du == 0 && dv == 0 {
                    continue;
                }
                let (uu, vv) = (u as i32 + du, v as i32 + dv);
                if uu < 0 || vv < 0 || uu >= w || vv >= h {
                    continue;
                }
                if let Some(q) = unproject_pixel(depth, k, uu as u32, vv as u32) {
                    if (q.z - zc).abs() <= rel * zc {
                        nbrs.push(q);
                    }
                }
            }
        }
        if nbrs.len() - 1 < MIN_NORMAL_NEIGHBORS {
            continue;
        }
        let Some(n) = plane_normal(&nbrs) else { continue };
        let d = n.dot(p);
        let n = if d > S::zero() {
            -n
        } else if d < S::zero() {
            n
        } else {
            continue;
        };
        keep.push(idx);
        normals.push(UnitVec3::new_unchecked(n));
    }
    let cloud = organized.cloud.select(&keep).with_normals(normals)?;
    let pixels = keep.iter().map(|&i| organized.pixels[i]).collect();
    Ok(OrganizedCloud { cloud, pixels })
}

/// Smallest-eigenvalue direction of the scatter matrix of `pts`.
pub fn plane_normal<S: Real>(pts: &[Vec3<S>]) -> Option<Vec3<S>> {
    let n = S::from_usize_lossy(pts.len());
    let c = pts.iter().fold(Vec3::zeros(), |a, p| a + *p) / n;
    let mut cov = [[S::zero(); 3]; 3];
    for p in pts {
        let d = (*p - c).to_array();
        for i in 0..3 {
            for j in i..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    cov[1][0] = cov[0][1];
    cov[2][0] = cov[0][2];
    cov[2][1] = cov[1][2];
    let (vals, vecs) = symmetric_eigen3(cov);
    // A line (rank-1 scatter) has no defined plane.
    if !(vals[1] > S::zero()) {
        return None;
    }
    vecs[0].try_normalize()
}
