//! Point-to-plane ICP with an annealed correspondence gate.

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{Mat3, Quaternion, RigidPose, UnitVec3, Vec3};
use crate::linalg::solve_spd6;
use crate::scalar::Real;
use kiddo::{ImmutableKdTree, SquaredEuclidean};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams<S> {
    pub max_iters: usize,
    /// First correspondence gate, fraction of the diameter.
    pub corr_dist_start: S,
    /// Last correspondence gate, fraction of the diameter.
    pub corr_dist_end: S,
    /// Radians.
    pub converge_rot: S,
    /// Fraction of the diameter.
    pub converge_trans: S,
}

impl<S: Real> Default for IcpParams<S> {
    fn default() -> Self {
        Self {
            max_iters: 30,
            corr_dist_start: S::lit(0.15),
            corr_dist_end: S::lit(0.05),
            converge_rot: S::lit(0.1f64.to_radians()),
            converge_trans: S::lit(1e-4),
        }
    }
}

impl<S: Real> IcpParams<S> {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0
            || !(self.corr_dist_end > S::zero())
            || self.corr_dist_start < self.corr_dist_end
            || !(self.converge_rot >= S::zero())
            || !(self.converge_trans >= S::zero())
        {
            return Err(Error::InvalidArgument(format!("invalid ICP parameters: {self:?}")));
        }
        Ok(())
    }

    /// Gate in meters at iteration `k`.
    pub fn gate(&self, k: usize, diameter: S) -> S {
        let t = if self.max_iters > 1 {
            S::from_usize_lossy(k.min(self.max_iters - 1)) / S::from_usize_lossy(self.max_iters - 1)
        } else {
            S::zero()
        };
        (self.corr_dist_start + (self.corr_dist_end - self.corr_dist_start) * t) * diameter
    }
}

/// One accepted update: gated RMS before and after, at the same gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpStep<S> {
    pub gate: S,
    pub rms_before: S,
    pub rms_after: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult<S> {
    pub pose: RigidPose<S>,
    /// Gated point-to-plane RMS at the final pose and final gate, meters.
    pub rms_residual: S,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IcpStep<S>>,
}

/// Scene side of ICP: points, normals and a k-d tree over the points.
#[derive(Debug)]
pub struct IcpScene<S> {
    tree: ImmutableKdTree<f64, 3>,
    points: Vec<Vec3<S>>,
    normals: Vec<UnitVec3<S>>,
}

impl<S: Real> IcpScene<S> {
    pub fn new(scene: &PointCloud<S>) -> Result<Self> {
        let normals = scene
            .normals()
            .ok_or_else(|| Error::InvalidArgument("ICP scene has no normals".into()))?
            .to_vec();
        if scene.is_empty() {
            return Err(Error::Empty("ICP scene cloud"));
        }
        let coords: Vec<[f64; 3]> = scene.points().iter().map(|p| p.cast::<f64>().to_array()).collect();
        let tree = ImmutableKdTree::new_from_slice(&coords)
            .map_err(|e| Error::InvalidArgument(format!("ICP scene index: {e:?}")))?;
        Ok(Self {
            tree,
            points: scene.points().to_vec(),
            normals,
        })
    }

    /// Nearest scene point within `radius` of `q`.
    fn nearest(&self, q: &Vec3<S>, radius: S) -> Option<usize> {
        let nn = self
            .tree
            .query(&q.cast::<f64>().to_array())
            .nearest_one::<SquaredEuclidean<f64>>()
            .execute();
        let r = radius.as_f64();
        (nn.distance <= r * r).then_some(nn.item as usize)
    }
}

const MAX_HALVINGS: usize = 5;

struct Residuals<S> {
    ata: [[S; 6]; 6],
    atb: [S; 6],
    sum_sq: S,
    count: usize,
}

impl<S: Real> Residuals<S> {
    fn rms(&self) -> Option<S> {
        (self.count > 0).then(|| (self.sum_sq / S::from_usize_lossy(self.count)).sqrt())
    }
}

fn residuals<S: Real>(
    pose: &RigidPose<S>,
    model: &[Vec3<S>],
    scene: &IcpScene<S>,
    gate: S,
    with_system: bool,
) -> Residuals<S> {
    let mut r = Residuals {
        ata: [[S::zero(); 6]; 6],
        atb: [S::zero(); 6],
        sum_sq: S::zero(),
        count: 0,
    };
    for x in model {
        let y = pose.transform_point(x);
        let Some(j) = scene.nearest(&y, gate) else { continue };
        let n = scene.normals[j].as_vec();
        let q = scene.points[j];
        let e = (y - q).dot(&n);
        r.sum_sq += e * e;
        r.count += 1;
        if with_system {
            let c = y.cross(&n);
            let row = [c.x, c.y, c.z, n.x, n.y, n.z];
            for a in 0..6 {
                r.atb[a] -= row[a] * e;
                for b in a..6 {
                    r.ata[a][b] += row[a] * row[b];
                }
            }
        }
    }
    if with_system {
        for a in 0..6 {
            for b in 0..a {
                r.ata[a][b] = r.ata[b][a];
            }
        }
    }
    r
}

fn skew<S: Real>(w: &Vec3<S>) -> Mat3<S> {
    let z = S::zero();
    Mat3([[z, -w.z, w.y], [w.z, z, -w.x], [-w.y, w.x, z]])
}

/// Exponential of the twist `(omega, v)`, left-applied in scene coordinates.
pub fn se3_exp<S: Real>(omega: &Vec3<S>, v: &Vec3<S>) -> RigidPose<S> {
    let theta = omega.norm();
    let k = skew(omega);
    let k2 = k.mul_mat(&k);
    let (b, c) = if theta < S::lit(1e-4) {
        let t2 = theta * theta;
        (S::lit(0.5) - t2 / S::lit(24.0), S::one() / S::lit(6.0) - t2 / S::lit(120.0))
    } else {
        let t2 = theta * theta;
        ((S::one() - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    let kv = k.mul_vec(v);
    let k2v = k2.mul_vec(v);
    let t = *v + kv * b + k2v * c;
    RigidPose::new(Quaternion::from_rotation_vector(omega), t)
}

/// Refines `init` (model to scene) by point-to-plane ICP. The gate shrinks
/// linearly from `corr_dist_start` to `corr_dist_end` times the diameter.
/// Each step is halved up to five times until the gated RMS at the current
/// gate does not increase; a step that cannot be made non-increasing is
/// dropped. A step that rotates less than `converge_rot` and moves the model
/// centroid less than `converge_trans * diameter`, or no accepted step,
/// means the pose has settled: at a wider gate the schedule skips to
/// `corr_dist_end`, at `corr_dist_end` the run stops.
pub fn refine_icp<S: Real>(
    init: &RigidPose<S>,
    model_cloud: &PointCloud<S>,
    scene: &PointCloud<S>,
    diameter: S,
    params: &IcpParams<S>,
) -> Result<IcpResult<S>> {
    params.validate()?;
    let index = IcpScene::new(scene)?;
    refine_icp_indexed(init, model_cloud, &index, diameter, params)
}

/// [`refine_icp`] against a prebuilt scene index.
pub fn refine_icp_indexed<S: Real>(
    init: &RigidPose<S>,
    model_cloud: &PointCloud<S>,
    scene: &IcpScene<S>,
    diameter: S,
    params: &IcpParams<S>,
) -> Result<IcpResult<S>> {
    params.validate()?;
    let model = model_cloud.points();
    let centroid = model_cloud.centroid().ok_or(Error::Empty("ICP model cloud"))?;
    let mut pose = *init;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let trans_tol = params.converge_trans * diameter;

    // Index into the gate schedule; it skips to the end once the pose has
    // settled at a wider gate.
    let last = params.max_iters - 1;
    let mut stage = 0;
    let mut gate = params.gate(0, diameter);
    for k in 0..params.max_iters {
        gate = params.gate(stage, diameter);
        let at_end = stage >= last;
        let sys = residuals(&pose, model, scene, gate, true);
        let Some(rms_before) = sys.rms() else {
            if k == 0 {
                return Err(Error::NoCorrespondences);
            }
            break;
        };
        iterations = k + 1;
        let Some(xi) = solve_spd6(&sys.ata, &sys.atb) else {
            break;
        };
        let mut scale = S::one();
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let omega = Vec3::new(xi[0], xi[1], xi[2]) * scale;
            let v = Vec3::new(xi[3], xi[4], xi[5]) * scale;
            let candidate = se3_exp(&omega, &v).compose(&pose);
            let after = residuals(&candidate, model, scene, gate, false).rms();
            if let Some(rms_after) = after.filter(|a| *a <= rms_before) {
                accepted = Some((candidate, rms_after, omega.norm()));
                break;
            }
            scale = scale * S::lit(0.5);
        }
        let settled = match accepted {
            Some((candidate, rms_after, rot)) => {
                let moved = candidate
                    .transform_point(&centroid)
                    .distance(&pose.transform_point(&centroid));
                pose = candidate;
                trace.push(IcpStep {
                    gate,
                    rms_before,
                    rms_after,
                });
                rot < params.converge_rot && moved < trans_tol
            }
            // No descent at this gate: the pose is a fixed point of the step.
            None => true,
        };
        if settled && at_end {
            converged = true;
            break;
        }
        stage = if settled { last } else { (stage + 1).min(last) };
    }
    let rms_residual = residuals(&pose, model, scene, gate, false)
        .rms()
        .unwrap_or(S::zero());
    Ok(IcpResult {
        pose,
        rms_residual,
        iterations,
        converged,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::ObjectModel;
    use crate::shapes::l_bracket;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bracket() -> ObjectModel<f64> {
        l_bracket(1, 0.12, 0.003, [0, 0, 0]).unwrap()
    }

    /// Rotation by `deg` about a random axis through the model origin plus a
    /// translation of length `dist`, applied in model coordinates.
    fn perturb(rng: &mut impl Rng, deg: f64, dist: f64) -> RigidPose<f64> {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let dir = dir / dir.norm();
        RigidPose::from_axis_angle(&axis, deg.to_radians(), dir * dist)
    }

    #[test]
    fn exponential_matches_rotation_and_small_angle_limit() {
        let w = Vec3::<f64>::new(0.3, -0.2, 0.5);
        let v = Vec3::new(0.1, 0.2, 0.3);
        let p = se3_exp(&w, &v);
        assert!((p.rotation().angle() - w.norm()).abs() < 1e-12);
        // Pure translation.
        let p = se3_exp(&Vec3::zeros(), &v);
        assert!(p.translation().distance(&v) < 1e-15);
        // exp(xi) = exp(xi / n)^n; the small steps use the series branch.
        let mut acc = RigidPose::identity();
        let n = 4096;
        let small = se3_exp(&(w / n as f64), &(v / n as f64));
        for _ in 0..n {
            acc = small.compose(&acc);
        }
        assert!(acc.approx_eq(&se3_exp(&w, &v), 1e-9, 1e-9));
        // Continuity across the series switch.
        let a = se3_exp(&(w / w.norm() * (1e-4 * (1.0 - 1e-9))), &v);
        let b = se3_exp(&(w / w.norm() * (1e-4 * (1.0 + 1e-9))), &v);
        assert!(a.translation().distance(b.translation()) < 1e-12);
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let m = bracket();
        let gt = RigidPose::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 0.7, Vec3::new(0.05, 0.0, 0.9));
        let scene = m.cloud().transformed(&gt);
        let r = refine_icp(&gt, m.cloud(), &scene, m.diameter(), &IcpParams::default()).unwrap();
        assert!(r.converged);
        assert!(r.rms_residual < 1e-6);
        assert!(r.pose.approx_eq(&gt, 1e-6, 1e-6));
    }

    #[test]
    fn recovers_small_perturbations() {
        let m = bracket();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = m.diameter();
        for _ in 0..10 {
            let gt = RigidPose::from_axis_angle(&Vec3::new(0.2, 1.0, 0.1), rng.random_range(0.0..3.0), Vec3::new(0.0, 0.0, 1.0));
            let scene = m.cloud().transformed(&gt);
            let init = gt.compose(&perturb(&mut rng, 5.0, 0.02 * d));
            let r = refine_icp(&init, m.cloud(), &scene, d, &IcpParams::default()).unwrap();
            assert!(r.pose.rotation_angle_to(&gt) < 0.5f64.to_radians());
            assert!(r.pose.translation_distance(&gt) < 0.002 * d);
            for s in &r.trace {
                assert!(s.rms_after <= s.rms_before);
            }
        }
    }

    #[test]
    fn far_initialization_has_no_correspondences() {
        let m = bracket();
        let scene = m.cloud().clone();
        let init = RigidPose::from_translation(Vec3::new(2.0 * m.diameter(), 0.0, 0.0));
        assert!(matches!(
            refine_icp(&init, m.cloud(), &scene, m.diameter(), &IcpParams::default()),
            Err(Error::NoCorrespondences)
        ));
    }

    #[test]
    fn equivariant_under_rigid_pretransform() {
        let m = bracket();
        let d = m.diameter();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let scene = m.cloud().transformed(&gt);
        let init = gt.compose(&perturb(&mut rng, 4.0, 0.01 * d));
        let g = RigidPose::from_axis_angle(&Vec3::new(0.3, -1.0, 0.4), 1.3, Vec3::new(0.2, 0.1, -0.3));
        let a = refine_icp(&init, m.cloud(), &scene, d, &IcpParams::default()).unwrap();
        let b = refine_icp(&g.compose(&init), m.cloud(), &scene.transformed(&g), d, &IcpParams::default()).unwrap();
        assert!(b.pose.approx_eq(&g.compose(&a.pose), 1e-6, 1e-6));
    }

    #[test]
    fn independent_of_model_point_order() {
        let m = bracket();
        let d = m.diameter();
        let gt = RigidPose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let scene = m.cloud().transformed(&gt);
        let init = gt.compose(&perturb(&mut ChaCha8Rng::seed_from_u64(4), 3.0, 0.01 * d));
        let mut order: Vec<usize> = (0..m.cloud().len()).collect();
        order.reverse();
        let a = refine_icp(&init, m.cloud(), &scene, d, &IcpParams::default()).unwrap();
        let b = refine_icp(&init, &m.cloud().select(&order), &scene, d, &IcpParams::default()).unwrap();
        assert!(a.pose.approx_eq(&b.pose, 1e-9, 1e-9));
    }

    #[test]
    fn gate_anneals_linearly() {
        let p = IcpParams::<f64>::default();
        assert!((p.gate(0, 2.0) - 0.3).abs() < 1e-12);
        assert!((p.gate(29, 2.0) - 0.1).abs() < 1e-12);
        assert!(IcpParams { corr_dist_end: 0.2, ..p }.validate().is_err());
    }
}
