//! Recall curves and average recall over MSSD and MSPD thresholds.

use std::collections::BTreeMap;

use serde::Serialize;

/// Errors of one ground-truth instance. Unmatched instances carry infinite
/// errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceError {
    pub object_id: u32,
    /// Meters.
    pub mssd: f64,
    /// Pixels.
    pub mspd: f64,
    /// Meters.
    pub diameter: f64,
}

impl InstanceError {
    pub fn missed(object_id: u32, diameter: f64) -> Self {
        Self {
            object_id,
            mssd: f64::INFINITY,
            mspd: f64::INFINITY,
            diameter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    /// MSSD thresholds as fractions of the object diameter.
    pub mssd: Vec<f64>,
    /// MSPD thresholds, pixels.
    pub mspd: Vec<f64>,
}

impl Default for Thresholds {
    /// `0.05, 0.10, ..., 0.50` of the diameter and `5, 10, ..., 50` px.
    fn default() -> Self {
        Self {
            mssd: (1..=10).map(|i| i as f64 * 0.05).collect(),
            mspd: (1..=10).map(|i| i as f64 * 5.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallCurve {
    pub mssd: Vec<f64>,
    pub mspd: Vec<f64>,
    /// Mean of all entries of both curves.
    pub ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoseErrorReport {
    pub instances: Vec<InstanceError>,
    pub thresholds: Thresholds,
    pub overall: RecallCurve,
    pub per_object: BTreeMap<u32, RecallCurve>,
}

impl PoseErrorReport {
    pub fn ar(&self) -> f64 {
        self.overall.ar
    }
}

/// Fraction of instances with `mssd < frac * diameter`.
pub fn mssd_recall_at(errors: &[InstanceError], frac: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|e| e.mssd < frac * e.diameter).count() as f64 / errors.len() as f64
}

/// Fraction of instances with `mspd < px`.
pub fn mspd_recall_at(errors: &[InstanceError], px: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().filter(|e| e.mspd < px).count() as f64 / errors.len() as f64
}

fn curve(errors: &[InstanceError], th: &Thresholds) -> RecallCurve {
    let mssd: Vec<f64> = th.mssd.iter().map(|&f| mssd_recall_at(errors, f)).collect();
    let mspd: Vec<f64> = th.mspd.iter().map(|&p| mspd_recall_at(errors, p)).collect();
    let n = mssd.len() + mspd.len();
    let ar = if n == 0 {
        0.0
    } else {
        (mssd.iter().sum::<f64>() + mspd.iter().sum::<f64>()) / n as f64
    };
    RecallCurve { mssd, mspd, ar }
}

/// Recall of each metric at each threshold and their mean, overall and per
/// object. No instances give zero recall everywhere.
pub fn average_recall(errors: &[InstanceError], thresholds: &Thresholds) -> PoseErrorReport {
    let mut by_object: BTreeMap<u32, Vec<InstanceError>> = BTreeMap::new();
    for e in errors {
        by_object.entry(e.object_id).or_default().push(*e);
    }
    PoseErrorReport {
        instances: errors.to_vec(),
        thresholds: thresholds.clone(),
        overall: curve(errors, thresholds),
        per_object: by_object.iter().map(|(id, es)| (*id, curve(es, thresholds))).collect(),
    }
}
