use rayon::prelude::*;

use super::feature::{compute_ppf, CanonicalFrame, PpfKey, Quantizer};
use crate::cloud::{ObjectModel, PointCloud};
use crate::error::{Error, Result};
use crate::hash::IntMap;
use crate::sampling::voxel_downsample;
use crate::scalar::Real;

/// Default sampling rate relative to the model diameter.
pub const DEFAULT_TAU_D: f64 = 0.05;
/// Default number of angle bins over `[0, π]` (6° steps).
pub const DEFAULT_N_ANGLE: u32 = 30;

/// One stored pair: the model reference point and its canonical angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelEntry<S> {
    pub ref_index: u32,
    pub alpha: S,
}

/// Feature key to entries, stored as sorted keys with contiguous entry runs.
#[derive(Debug, Clone)]
pub struct PpfTable<S> {
    keys: Vec<PpfKey>,
    /// `offsets[i]..offsets[i + 1]` are the entries of `keys[i]`.
    offsets: Vec<u32>,
    entries: Vec<ModelEntry<S>>,
    index: IntMap<u64, u32>,
}

impl<S: Real> PpfTable<S> {
    /// Groups `(key, entry)` pairs by key, preserving input order within a key.
    pub fn from_pairs(mut pairs: Vec<(PpfKey, ModelEntry<S>)>) -> Self {
        pairs.sort_by_key(|(k, _)| *k);
        let mut keys = Vec::new();
        let mut offsets = Vec::new();
        let mut entries = Vec::with_capacity(pairs.len());
        for (k, e) in pairs {
            if keys.last() != Some(&k) {
                keys.push(k);
                offsets.push(entries.len() as u32);
            }
            entries.push(e);
        }
        offsets.push(entries.len() as u32);
        Self::from_parts(keys, offsets, entries)
    }

    pub(crate) fn from_parts(keys: Vec<PpfKey>, offsets: Vec<u32>, entries: Vec<ModelEntry<S>>) -> Self {
        let index = keys.iter().enumerate().map(|(i, k)| (k.0, i as u32)).collect();
        Self {
            keys,
            offsets,
            entries,
            index,
        }
    }

    #[inline]
    pub fn get(&self, key: PpfKey) -> &[ModelEntry<S>] {
        match self.index.get(&key.0) {
            Some(&i) => {
                let i = i as usize;
                &self.entries[self.offsets[i] as usize..self.offsets[i + 1] as usize]
            }
            None => &[],
        }
    }

    pub fn num_keys(&self) -> usize {
        self.keys.len()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(key, entries)` in ascending key order.
    pub fn iter(&self) -> impl Iterator<Item = (PpfKey, &[ModelEntry<S>])> {
        self.keys.iter().enumerate().map(move |(i, k)| {
            (
                *k,
                &self.entries[self.offsets[i] as usize..self.offsets[i + 1] as usize],
            )
        })
    }
}

impl<S: Real> PartialEq for PpfTable<S> {
    fn eq(&self, o: &Self) -> bool {
        self.keys == o.keys && self.offsets == o.offsets && self.entries == o.entries
    }
}

/// Offline description of one object: its sampled oriented cloud and every
/// ordered point pair hashed by quantized feature.
#[derive(Debug, Clone)]
pub struct PpfModel<S> {
    pub object_id: u32,
    pub quantizer: Quantizer<S>,
    pub model_cloud: PointCloud<S>,
    pub diameter: S,
    pub table: PpfTable<S>,
}

impl<S: Real> PartialEq for PpfModel<S> {
    fn eq(&self, o: &Self) -> bool {
        self.object_id == o.object_id
            && self.quantizer == o.quantizer
            && self.model_cloud == o.model_cloud
            && self.diameter == o.diameter
            && self.table == o.table
    }
}

impl<S: Real> PpfModel<S> {
    /// Voxel step `δd` the model (and any scene matched against it) is sampled at.
    pub fn sample_step(&self) -> S {
        self.quantizer.dist_step
    }

    pub fn angle_step(&self) -> S {
        self.quantizer.angle_step
    }

    pub fn n_angle(&self) -> u32 {
        self.quantizer.n_angle
    }

    pub fn num_points(&self) -> usize {
        self.model_cloud.len()
    }
}

/// Builds the model description: sample the model at `tau_d * diameter`,
/// then hash every ordered pair `(i, j)`, `i != j`, as
/// `key(F(m_i, m_j)) -> (i, alpha(m_i, m_j))`.
pub fn build_model<S: Real>(model: &ObjectModel<S>, tau_d: S, n_angle: u32) -> Result<PpfModel<S>> {
    if !(tau_d > S::zero() && tau_d <= S::lit(0.5)) {
        return Err(Error::InvalidArgument(format!("tau_d must be in (0, 0.5], got {tau_d}")));
    }
    if n_angle < 4 {
        return Err(Error::InvalidArgument(format!("n_angle must be >= 4, got {n_angle}")));
    }
    if !model.cloud().has_normals() {
        return Err(Error::InvalidArgument(format!(
            "object {} has no normals",
            model.object_id
        )));
    }
    let step = tau_d * model.diameter();
    let quantizer = Quantizer::new(step, n_angle)?;
    let sampled = voxel_downsample(&model.cloud().clone().without_colors(), step)?;
    from_sampled_cloud(model.object_id, sampled, model.diameter(), quantizer)
}

/// Hashes an already sampled, oriented cloud.
pub fn from_sampled_cloud<S: Real>(
    object_id: u32,
    sampled: PointCloud<S>,
    diameter: S,
    quantizer: Quantizer<S>,
) -> Result<PpfModel<S>> {
    let normals = sampled
        .normals()
        .ok_or_else(|| Error::InvalidArgument(format!("object {object_id}: sampled cloud has no normals")))?;
    if sampled.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "object {object_id} has {} sampled point(s); need at least 2",
            sampled.len()
        )));
    }
    let pts = sampled.points();

    let per_ref: Vec<Vec<(PpfKey, ModelEntry<S>)>> = (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let frame = CanonicalFrame::new(&pts[i], &normals[i]);
            let mut out = Vec::with_capacity(pts.len() - 1);
            for j in 0..pts.len() {
                if i == j {
                    continue;
                }
                let f = compute_ppf(&pts[i], &normals[i], &pts[j], &normals[j])?;
                out.push((
                    quantizer.key(&f),
                    ModelEntry {
                        ref_index: i as u32,
                        alpha: frame.alpha(&pts[j]),
                    },
                ));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let table = PpfTable::from_pairs(per_ref.into_iter().flatten().collect());

    Ok(PpfModel {
        object_id,
        quantizer,
        model_cloud: sampled,
        diameter,
        table,
    })
}
