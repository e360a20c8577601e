//! Online stage: point-pair voting inside one instance, pose clustering and
//! hypothesis scoring.

use std::cmp::Ordering;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geom::{average_rotations, RigidPose, UnitVec3, Vec3};
use crate::ppf::{compute_ppf, rot_x, CanonicalFrame, PpfModel};
use crate::sampling::SampledCloud;
use crate::scalar::Real;
use crate::spatial::HashGrid;

/// Alpha bins of the voting accumulator over `(-π, π]`.
pub const ALPHA_BINS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams<S> {
    /// Every `ref_sampling_stride`-th scene point is a reference point.
    pub ref_sampling_stride: usize,
    /// Accumulator cells with at least this fraction of the maximum become peaks.
    pub peak_rel_threshold: S,
    /// Cluster join distance as a fraction of the model diameter.
    pub cluster_trans_thresh: S,
    /// Cluster join angle, radians.
    pub cluster_rot_thresh: S,
    pub top_k_clusters: usize,
    /// Detector mask dilation as a fraction of the mask bbox diagonal.
    pub mask_dilation: S,
}

impl<S: Real> Default for MatchParams<S> {
    fn default() -> Self {
        Self {
            ref_sampling_stride: 5,
            peak_rel_threshold: S::lit(0.85),
            cluster_trans_thresh: S::lit(0.1),
            cluster_rot_thresh: S::lit(12f64.to_radians()),
            top_k_clusters: 5,
            mask_dilation: S::lit(0.05),
        }
    }
}

impl<S: Real> MatchParams<S> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ref_sampling_stride > 0
            && self.peak_rel_threshold > S::zero()
            && self.peak_rel_threshold <= S::one()
            && self.cluster_trans_thresh > S::zero()
            && self.cluster_rot_thresh > S::zero()
            && self.top_k_clusters > 0
            && self.mask_dilation > S::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid match parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseHypothesis<S> {
    /// Model-to-scene transform.
    pub pose: RigidPose<S>,
    pub votes: u32,
    /// Index of the scene reference point that produced it.
    pub ref_point: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseCluster<S> {
    pub pose: RigidPose<S>,
    pub total_votes: u32,
    pub members: u32,
    /// Fitting score in `[0, 1]`; zero until scored.
    pub fit: S,
}

#[inline]
fn alpha_bin<S: Real>(a: S, inv_width: S) -> usize {
    let b = ((a + S::PI()) * inv_width).floor().to_usize().unwrap_or(0);
    b.min(ALPHA_BINS - 1)
}

#[inline]
fn wrap_angle<S: Real>(a: S) -> S {
    let two_pi = S::PI() + S::PI();
    if a > -S::PI() && a <= S::PI() {
        return a;
    }
    let mut a = if a.abs() < two_pi + S::PI() { a } else { a % two_pi };
    if a <= -S::PI() {
        a += two_pi;
    } else if a > S::PI() {
        a -= two_pi;
    }
    a
}

fn check_scene<S: Real>(scene: &SampledCloud<S>, model: &PpfModel<S>) -> Result<()> {
    if scene.cloud.is_empty() {
        return Err(Error::Empty("scene cloud (empty or invalid mask)"));
    }
    let (s, m) = (scene.step.as_f64(), model.sample_step().as_f64());
    if (s - m).abs() > 1e-6 * m {
        return Err(Error::SamplingMismatch { scene: s, model: m });
    }
    if !scene.cloud.has_normals() {
        return Err(Error::InvalidArgument("scene cloud has no normals".into()));
    }
    Ok(())
}

/// Hough voting over model reference point and rotation angle for every
/// `ref_sampling_stride`-th scene point. Pairs are formed within the scene
/// cloud only, at distances in `(0, diameter]`. Each accumulator peak (the
/// maximum and every cell within `peak_rel_threshold` of it) becomes one
/// hypothesis. Output is ordered by reference point, then accumulator cell.
pub fn vote_instance<S: Real>(
    scene: &SampledCloud<S>,
    model: &PpfModel<S>,
    params: &MatchParams<S>,
) -> Result<Vec<PoseHypothesis<S>>> {
    params.validate()?;
    check_scene(scene, model)?;
    let pts = scene.cloud.points();
    let normals = scene.cloud.normals().expect("checked");
    let diameter = model.diameter;
    let grid = HashGrid::new(pts, diameter);

    let n_model = model.num_points();
    let model_pts = model.model_cloud.points();
    let model_normals = model.model_cloud.normals().expect("models carry normals");
    let model_frames: Vec<RigidPose<S>> = model_pts
        .iter()
        .zip(model_normals)
        .map(|(p, n)| CanonicalFrame::new(p, n).pose)
        .collect();

    let width = (S::PI() + S::PI()) / S::from_usize_lossy(ALPHA_BINS);
    let inv_width = S::one() / width;
    let mut acc = vec![0u32; n_model * ALPHA_BINS];
    let mut out = Vec::new();
    for r in (0..pts.len()).step_by(params.ref_sampling_stride) {
        acc.iter_mut().for_each(|c| *c = 0);
        let frame = CanonicalFrame::new(&pts[r], &normals[r]);
        grid.for_each_within(&pts[r], diameter, |i, d2| {
            if i == r || d2 == S::zero() {
                return;
            }
            let Ok(f) = compute_ppf(&pts[r], &normals[r], &pts[i], &normals[i]) else {
                return;
            };
            let entries = model.table.get(model.quantizer.key(&f));
            if entries.is_empty() {
                return;
            }
            let alpha_s = frame.alpha(&pts[i]);
            for e in entries {
                let bin = alpha_bin(wrap_angle(e.alpha - alpha_s), inv_width);
                acc[e.ref_index as usize * ALPHA_BINS + bin] += 1;
            }
        });
        let max = acc.iter().copied().max().unwrap_or(0);
        if max == 0 {
            continue;
        }
        let cut = params.peak_rel_threshold * S::from_u32(max).unwrap();
        let scene_inv = frame.pose.inverse();
        for (cell, &votes) in acc.iter().enumerate() {
            if votes != max && S::from_u32(votes).unwrap() < cut {
                continue;
            }
            let (m, bin) = (cell / ALPHA_BINS, cell % ALPHA_BINS);
            let alpha = -S::PI() + (S::from_usize_lossy(bin) + S::lit(0.5)) * width;
            out.push(PoseHypothesis {
                pose: scene_inv.compose(&rot_x(alpha)).compose(&model_frames[m]),
                votes,
                ref_point: r,
            });
        }
    }
    Ok(out)
}

fn cmp_real<S: Real>(a: S, b: S) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Deterministic hypothesis order: votes descending, then reference point,
/// translation and rotation ascending.
fn hypothesis_order<S: Real>(a: &PoseHypothesis<S>, b: &PoseHypothesis<S>) -> Ordering {
    b.votes
        .cmp(&a.votes)
        .then(a.ref_point.cmp(&b.ref_point))
        .then_with(|| {
            let (ta, tb) = (a.pose.translation().to_array(), b.pose.translation().to_array());
            let (qa, qb) = (a.pose.rotation().to_array(), b.pose.rotation().to_array());
            ta.iter()
                .zip(&tb)
                .chain(qa.iter().zip(&qb))
                .map(|(x, y)| cmp_real(*x, *y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Greedy clustering: hypotheses in [`hypothesis_order`] join the first
/// cluster whose seed is within `cluster_trans_thresh * diameter` and
/// `cluster_rot_thresh`, otherwise start a new one. Cluster poses are
/// vote-weighted averages. Returns the `top_k_clusters` clusters with the
/// most votes.
pub fn cluster_poses<S: Real>(
    hyps: &[PoseHypothesis<S>],
    diameter: S,
    params: &MatchParams<S>,
) -> Vec<PoseCluster<S>> {
    struct Acc<S> {
        seed: RigidPose<S>,
        rotations: Vec<crate::geom::Quaternion<S>>,
        weights: Vec<S>,
        translation: Vec3<S>,
        votes: u32,
    }
    let mut sorted: Vec<&PoseHypothesis<S>> = hyps.iter().collect();
    sorted.sort_by(|a, b| hypothesis_order(a, b));
    let trans_thresh = params.cluster_trans_thresh * diameter;
    let mut clusters: Vec<Acc<S>> = Vec::new();
    for h in sorted {
        let w = S::from_u32(h.votes).unwrap();
        let target = clusters.iter_mut().find(|c| {
            c.seed.translation_distance(&h.pose) <= trans_thresh
                && c.seed.rotation_angle_to(&h.pose) <= params.cluster_rot_thresh
        });
        match target {
            Some(c) => {
                c.rotations.push(*h.pose.rotation());
                c.weights.push(w);
                c.translation += *h.pose.translation() * w;
                c.votes += h.votes;
            }
            None => clusters.push(Acc {
                seed: h.pose,
                rotations: vec![*h.pose.rotation()],
                weights: vec![w],
                translation: *h.pose.translation() * w,
                votes: h.votes,
            }),
        }
    }
    let mut out: Vec<PoseCluster<S>> = clusters
        .into_iter()
        .map(|c| {
            let total = S::from_u32(c.votes).unwrap();
            let rotation = if total > S::zero() {
                average_rotations(&c.rotations, &c.weights).unwrap_or(*c.seed.rotation())
            } else {
                *c.seed.rotation()
            };
            let translation = if total > S::zero() {
                c.translation / total
            } else {
                *c.seed.translation()
            };
            PoseCluster {
                pose: RigidPose::new(rotation, translation),
                total_votes: c.votes,
                members: c.rotations.len() as u32,
                fit: S::zero(),
            }
        })
        .collect();
    // Stable: equal totals keep creation order.
    out.sort_by(|a, b| b.total_votes.cmp(&a.total_votes));
    out.truncate(params.top_k_clusters);
    out
}

/// Scene points with normals and a neighbor index at cell size `step`.
#[derive(Debug, Clone)]
pub struct SceneIndex<S> {
    grid: HashGrid<S>,
    normals: Vec<UnitVec3<S>>,
    step: S,
}

impl<S: Real> SceneIndex<S> {
    pub fn new(cloud: &PointCloud<S>, step: S) -> Result<Self> {
        let normals = cloud
            .normals()
            .ok_or_else(|| Error::InvalidArgument("scene cloud has no normals".into()))?
            .to_vec();
        if !(step > S::zero()) {
            return Err(Error::InvalidArgument(format!("index step must be positive, got {step}")));
        }
        Ok(Self {
            grid: HashGrid::new(cloud.points(), step),
            normals,
            step,
        })
    }

    pub fn step(&self) -> S {
        self.step
    }

    pub fn grid(&self) -> &HashGrid<S> {
        &self.grid
    }

    pub fn normals(&self) -> &[UnitVec3<S>] {
        &self.normals
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Normal agreement required by [`fitting_score`].
pub const FIT_NORMAL_TOLERANCE_DEG: f64 = 30.0;

/// Fraction of model samples that, moved by `pose`, have some scene point
/// within `2 * δd` whose normal is within 30° of the moved model normal.
pub fn fitting_score<S: Real>(pose: &RigidPose<S>, model: &PpfModel<S>, scene: &SceneIndex<S>) -> S {
    let n = model.num_points();
    if n == 0 || scene.is_empty() {
        return S::zero();
    }
    let radius = S::lit(2.0) * model.sample_step();
    let cos_tol = S::lit(FIT_NORMAL_TOLERANCE_DEG.to_radians().cos());
    let normals = model.model_cloud.normals().expect("models carry normals");
    let mut hits = 0usize;
    for (p, nm) in model.model_cloud.points().iter().zip(normals) {
        let q = pose.transform_point(p);
        let nq = pose.transform_vector(nm);
        let mut found = false;
        scene.grid.for_each_within(&q, radius, |i, _| {
            if !found && scene.normals[i].dot(&nq) >= cos_tol {
                found = true;
            }
        });
        hits += found as usize;
    }
    S::from_usize_lossy(hits) / S::from_usize_lossy(n)
}

/// Votes, clusters and scores one instance: the clusters come back with
/// `fit` filled in, still ordered by votes.
pub fn match_instance<S: Real>(
    scene: &SampledCloud<S>,
    model: &PpfModel<S>,
    params: &MatchParams<S>,
) -> Result<Vec<PoseCluster<S>>> {
    let hyps = vote_instance(scene, model, params)?;
    let mut clusters = cluster_poses(&hyps, model.diameter, params);
    let index = SceneIndex::new(&scene.cloud, model.sample_step())?;
    for c in &mut clusters {
        c.fit = fitting_score(&c.pose, model, &index);
    }
    Ok(clusters)
}
