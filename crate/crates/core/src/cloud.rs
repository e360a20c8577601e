//! Point clouds and object models.

use crate::error::{Error, Result};
use crate::geom::{RigidPose, UnitVec3, Vec3};
use crate::scalar::Real;

pub type Rgb = [u8; 3];

/// 3D points in meters with optional unit normals and colors held in
/// parallel arrays of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud<S> {
    points: Vec<Vec3<S>>,
    normals: Option<Vec<UnitVec3<S>>>,
    colors: Option<Vec<Rgb>>,
}

impl<S: Real> PointCloud<S> {
    /// Fails if any point is non-finite.
    pub fn new(points: Vec<Vec3<S>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite point at index {i}")));
        }
        Ok(Self {
            points,
            normals: None,
            colors: None,
        })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            normals: None,
            colors: None,
        }
    }

    pub fn with_normals(mut self, normals: Vec<UnitVec3<S>>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::SizeMismatch(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn with_colors(mut self, colors: Vec<Rgb>) -> Result<Self> {
        if colors.len() != self.points.len() {
            return Err(Error::SizeMismatch(format!(
                "{} colors for {} points",
                colors.len(),
                self.points.len()
            )));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    pub fn without_normals(mut self) -> Self {
        self.normals = None;
        self
    }

    pub fn without_colors(mut self) -> Self {
        self.colors = None;
        self
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Vec3<S>] {
        &self.points
    }

    #[inline]
    pub fn normals(&self) -> Option<&[UnitVec3<S>]> {
        self.normals.as_deref()
    }

    #[inline]
    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn has_colors(&self) -> bool {
        self.colors.is_some()
    }

    /// Keeps the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }

    pub fn transformed(&self, pose: &RigidPose<S>) -> Self {
        Self {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| pose.transform_normal(n)).collect()),
            colors: self.colors.clone(),
        }
    }

    pub fn centroid(&self) -> Option<Vec3<S>> {
        if self.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |a, p| a + *p);
        Some(sum / S::from_usize_lossy(self.len()))
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Option<(Vec3<S>, Vec3<S>)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (
                Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        }))
    }

    /// Concatenates clouds; attributes survive only if every part has them.
    pub fn concat(parts: &[&Self]) -> Self {
        let points = parts.iter().flat_map(|c| c.points.iter().copied()).collect();
        let normals = parts
            .iter()
            .all(|c| c.normals.is_some())
            .then(|| parts.iter().flat_map(|c| c.normals.as_ref().unwrap().iter().copied()).collect());
        let colors = parts
            .iter()
            .all(|c| c.colors.is_some())
            .then(|| parts.iter().flat_map(|c| c.colors.as_ref().unwrap().iter().copied()).collect());
        Self {
            points,
            normals,
            colors,
        }
    }

    pub fn cast<T: Real>(&self) -> PointCloud<T> {
        PointCloud {
            points: self.points.iter().map(|p| p.cast()).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| n.cast()).collect()),
            colors: self.colors.clone(),
        }
    }
}

/// Maximum pairwise distance, exact `O(n^2)`.
pub fn max_pairwise_distance<S: Real>(points: &[Vec3<S>]) -> S {
    let mut best = S::zero();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a.distance_squared(b);
            if d > best {
                best = d;
            }
        }
    }
    best.sqrt()
}

/// Greedy farthest-point subsample of `k` indices starting at index 0.
pub fn farthest_point_subsample<S: Real>(points: &[Vec3<S>], k: usize) -> Vec<usize> {
    if points.len() <= k {
        return (0..points.len()).collect();
    }
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![S::infinity(); points.len()];
    let mut next = 0usize;
    for _ in 0..k {
        chosen.push(next);
        let c = points[next];
        let mut far = (S::neg_infinity(), 0usize);
        for (i, p) in points.iter().enumerate() {
            let d = p.distance_squared(&c);
            if d < dist[i] {
                dist[i] = d;
            }
            if dist[i] > far.0 {
                far = (dist[i], i);
            }
        }
        next = far.1;
    }
    chosen
}

/// Diameter estimate used for loaded models: exact for up to 5000 points,
/// otherwise exact over a 5000-point farthest-point subsample.
pub fn cloud_diameter<S: Real>(points: &[Vec3<S>]) -> S {
    const EXACT_LIMIT: usize = 5000;
    if points.len() <= EXACT_LIMIT {
        max_pairwise_distance(points)
    } else {
        let idx = farthest_point_subsample(points, EXACT_LIMIT);
        let sub: Vec<_> = idx.iter().map(|&i| points[i]).collect();
        max_pairwise_distance(&sub)
    }
}

/// A rigid object: oriented (optionally colored) surface samples in model
/// coordinates, its diameter and its symmetry transforms. The symmetry list
/// always starts with the identity.
#[derive(Debug, Clone)]
pub struct ObjectModel<S> {
    pub object_id: u32,
    cloud: PointCloud<S>,
    diameter: S,
    symmetries: Vec<RigidPose<S>>,
}

impl<S: Real> ObjectModel<S> {
    /// Builds a model. `symmetries` may omit the identity; it is inserted at
    /// index 0 (and removed from elsewhere) so the list always starts with it.
    pub fn new(
        object_id: u32,
        cloud: PointCloud<S>,
        diameter: S,
        symmetries: Vec<RigidPose<S>>,
    ) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::Empty("object model has no points"));
        }
        if !(diameter > S::zero()) || !diameter.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "object {object_id}: diameter must be positive, got {diameter}"
            )));
        }
        let id = RigidPose::identity();
        let tol = S::lit(1e-9);
        let mut syms = vec![id];
        syms.extend(
            symmetries
                .into_iter()
                .filter(|s| !s.approx_eq(&id, S::lit(1e-6), tol)),
        );
        Ok(Self {
            object_id,
            cloud,
            diameter,
            symmetries: syms,
        })
    }

    /// Model with diameter measured from its own points.
    pub fn from_cloud(object_id: u32, cloud: PointCloud<S>, symmetries: Vec<RigidPose<S>>) -> Result<Self> {
        let d = cloud_diameter(cloud.points());
        Self::new(object_id, cloud, d, symmetries)
    }

    pub fn cloud(&self) -> &PointCloud<S> {
        &self.cloud
    }

    pub fn diameter(&self) -> S {
        self.diameter
    }

    pub fn symmetries(&self) -> &[RigidPose<S>] {
        &self.symmetries
    }

    pub fn with_symmetries(mut self, symmetries: Vec<RigidPose<S>>) -> Self {
        let d = self.diameter;
        let cloud = std::mem::take(&mut self.cloud);
        Self::new(self.object_id, cloud, d, symmetries).expect("already validated")
    }

    /// Approximate mean nearest-neighbor spacing of the model samples, used
    /// to size render splats.
    pub fn point_spacing(&self) -> S {
        let n = self.cloud.len().max(1);
        let (lo, hi) = self.cloud.bounds().unwrap_or((Vec3::zeros(), Vec3::zeros()));
        let e = hi - lo;
        // Surface area of the bounding box spread over the samples.
        let area = S::lit(2.0) * (e.x * e.y + e.y * e.z + e.x * e.z);
        (area / S::from_usize_lossy(n)).sqrt().max(S::lit(1e-6))
    }

    pub fn cast<T: Real>(&self) -> ObjectModel<T> {
        ObjectModel {
            object_id: self.object_id,
            cloud: self.cloud.cast(),
            diameter: T::lit(self.diameter.as_f64()),
            symmetries: self.symmetries.iter().map(|s| s.cast()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_points() {
        assert!(PointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn attribute_lengths_checked() {
        let c = PointCloud::new(vec![Vec3::<f64>::zeros(); 2]).unwrap();
        assert!(c.clone().with_normals(vec![UnitVec3::z_axis()]).is_err());
        assert!(c.with_colors(vec![[0, 0, 0]; 2]).is_ok());
    }

    #[test]
    fn subsampled_diameter_close_to_exact() {
        let pts: Vec<Vec3<f64>> = (0..6000)
            .map(|i| {
                let t = i as f64 * 0.001;
                Vec3::new(t.cos(), t.sin(), (i % 7) as f64 * 0.01)
            })
            .collect();
        let exact = max_pairwise_distance(&pts);
        let approx = cloud_diameter(&pts);
        assert!(approx <= exact + 1e-12);
        assert!(approx >= exact * (1.0 - 1e-3));
    }

    #[test]
    fn identity_symmetry_always_first() {
        let c = PointCloud::new(vec![Vec3::<f64>::zeros(), Vec3::x_axis()]).unwrap();
        let flip = RigidPose::from_axis_angle(&Vec3::z_axis(), std::f64::consts::PI, Vec3::zeros());
        let m = ObjectModel::new(1, c, 1.0, vec![flip, RigidPose::identity()]).unwrap();
        assert_eq!(m.symmetries().len(), 2);
        assert_eq!(m.symmetries()[0], RigidPose::identity());
    }
}
