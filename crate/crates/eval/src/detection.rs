//! Instance detections, mask IoU and mAP at an IoU threshold.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ppf_core::image::BinaryMask;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

/// One entry of a detections JSON array. `bbox` is `[x, y, w, h]` in
/// pixels; `mask_path` is relative to the JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub scene_id: u32,
    pub im_id: u32,
    pub obj_id: u32,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    pub bbox: [f64; 4],
}

/// Detections with their masks loaded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
    pub masks: Vec<Option<BinaryMask>>,
}

impl DetectionSet {
    pub fn new(detections: Vec<Detection>, masks: Vec<Option<BinaryMask>>) -> Result<Self> {
        if detections.len() != masks.len() {
            return Err(EvalError::SizeMismatch(format!(
                "{} detections but {} masks",
                detections.len(),
                masks.len()
            )));
        }
        let set = Self { detections, masks };
        set.validate()?;
        Ok(set)
    }

    /// Detections whose masks are all present.
    pub fn with_masks(items: Vec<(Detection, BinaryMask)>) -> Result<Self> {
        let (d, m): (Vec<_>, Vec<_>) = items.into_iter().map(|(d, m)| (d, Some(m))).unzip();
        Self::new(d, m)
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let mut dims: BTreeMap<(u32, u32), (u32, u32)> = BTreeMap::new();
        for (d, m) in self.detections.iter().zip(&self.masks) {
            if !d.score.is_finite() || d.bbox.iter().any(|v| !v.is_finite()) {
                return Err(EvalError::NonFinite("detection score or bbox"));
            }
            if let Some(m) = m {
                let prev = *dims.entry((d.scene_id, d.im_id)).or_insert((m.width, m.height));
                if prev != (m.width, m.height) {
                    return Err(EvalError::SizeMismatch(format!(
                        "scene {} image {}: masks of {}x{} and {}x{}",
                        d.scene_id, d.im_id, prev.0, prev.1, m.width, m.height
                    )));
                }
            }
        }
        Ok(())
    }

    /// Reads a detections JSON array and every referenced mask PNG.
    pub fn read(path: &Path) -> Result<Self> {
        let detections: Vec<Detection> = ppf_core::bop::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let masks = detections
            .iter()
            .map(|d| match &d.mask_path {
                Some(p) => Ok(Some(BinaryMask::read_png(&resolve(base, p))?)),
                None => Ok(None),
            })
            .collect::<Result<_>>()?;
        Self::new(detections, masks)
    }

    /// Writes the JSON array. Masks are not written; `mask_path` entries must
    /// already point at files relative to `path`.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        Ok(ppf_core::bop::write_json(path, &self.detections)?)
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// `|a ∩ b| / |a ∪ b|`; two empty masks give 0.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(EvalError::SizeMismatch(format!(
            "masks {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// IoU of `[x, y, w, h]` boxes.
pub fn bbox_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = ((a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0])).max(0.0);
    let ih = ((a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn pair_iou(pm: Option<&BinaryMask>, pb: &[f64; 4], gm: Option<&BinaryMask>, gb: &[f64; 4]) -> Result<f64> {
    match (pm, gm) {
        (Some(a), Some(b)) => mask_iou(a, b),
        _ => Ok(bbox_iou(pb, gb)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub per_class: BTreeMap<u32, f64>,
    pub map: f64,
}

/// Area under the monotone precision envelope, summed at each recall step.
pub fn average_precision(tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut prec = Vec::with_capacity(tp.len());
    let mut rec = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        prec.push(hits as f64 / (i + 1) as f64);
        rec.push(hits as f64 / n_gt as f64);
    }
    for i in (0..prec.len().saturating_sub(1)).rev() {
        prec[i] = prec[i].max(prec[i + 1]);
    }
    let mut ap = 0.0;
    let mut last_r = 0.0;
    for (r, p) in rec.iter().zip(&prec) {
        if *r > last_r {
            ap += (r - last_r) * p;
            last_r = *r;
        }
    }
    ap
}

/// Per-class AP and their unweighted mean over classes with ground truth.
/// Predictions are taken by decreasing score (stable), each matched to the
/// unmatched ground truth of the same image and class with the highest IoU,
/// if that IoU reaches `iou_thresh`. IoU is on masks when both sides have
/// one, on boxes otherwise. `class_agnostic` folds all classes into one.
pub fn map_at_iou(preds: &DetectionSet, gt: &DetectionSet, iou_thresh: f64, class_agnostic: bool) -> Result<MapReport> {
    let class = |d: &Detection| if class_agnostic { 0 } else { d.obj_id };
    type Key = (u32, u32, u32);
    let mut gt_by: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    let mut n_gt: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, d) in gt.detections.iter().enumerate() {
        gt_by.entry((class(d), d.scene_id, d.im_id)).or_default().push(i);
        *n_gt.entry(class(d)).or_default() += 1;
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds.detections[b].score.total_cmp(&preds.detections[a].score));

    let mut per_class = BTreeMap::new();
    for (&c, &count) in &n_gt {
        let mut matched = vec![false; gt.len()];
        let mut tp = Vec::new();
        for &i in order.iter().filter(|&&i| class(&preds.detections[i]) == c) {
            let p = &preds.detections[i];
            let mut best: Option<(usize, f64)> = None;
            for &g in gt_by.get(&(c, p.scene_id, p.im_id)).map(Vec::as_slice).unwrap_or(&[]) {
                if matched[g] {
                    continue;
                }
                let iou = pair_iou(preds.masks[i].as_ref(), &p.bbox, gt.masks[g].as_ref(), &gt.detections[g].bbox)?;
                if best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            match best {
                Some((g, iou)) if iou >= iou_thresh => {
                    matched[g] = true;
                    tp.push(true);
                }
                _ => tp.push(false),
            }
        }
        per_class.insert(c, average_precision(&tp, count));
    }
    let map = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok(MapReport { per_class, map })
}

/// A named detector and its predictions on the validation split.
#[derive(Debug, Clone)]
pub struct CandidateModel {
    pub name: String,
    pub predictions: DetectionSet,
}

/// Name of the candidate with the highest mAP at IoU 0.5, with every
/// candidate's mAP in input order. Ties go to the earlier candidate.
pub fn select_best(candidates: &[CandidateModel], gt: &DetectionSet, class_agnostic: bool) -> Result<(String, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(EvalError::Empty("candidate list"));
    }
    let mut maps = Vec::with_capacity(candidates.len());
    for c in candidates {
        if c.name.is_empty() {
            return Err(EvalError::InvalidArgument("candidate name must be nonempty".into()));
        }
        maps.push(map_at_iou(&c.predictions, gt, 0.5, class_agnostic)?.map);
    }
    let mut best = 0;
    for (i, m) in maps.iter().enumerate() {
        if *m > maps[best] {
            best = i;
        }
    }
    Ok((candidates[best].name.clone(), maps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rect(x0: u32, y0: u32, w: u32, h: u32) -> BinaryMask {
        BinaryMask::from_fn(40, 30, |x, y| x >= x0 && x < x0 + w && y >= y0 && y < y0 + h)
    }

    fn det(obj_id: u32, im_id: u32, score: f64, bbox: [f64; 4]) -> Detection {
        Detection {
            scene_id: 1,
            im_id,
            obj_id,
            score,
            mask_path: None,
            bbox,
        }
    }

    fn masked(items: &[(u32, u32, f64, (u32, u32, u32, u32))]) -> DetectionSet {
        DetectionSet::with_masks(
            items
                .iter()
                .map(|&(obj, im, score, (x, y, w, h))| {
                    (det(obj, im, score, [x as f64, y as f64, w as f64, h as f64]), rect(x, y, w, h))
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = rect(0, 0, 10, 10);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(mask_iou(&a, &rect(20, 0, 10, 10)).unwrap(), 0.0);
        // Equal rectangles overlapping by half: 50 / 150 pixels.
        let iou = mask_iou(&rect(0, 0, 10, 10), &rect(5, 0, 10, 10)).unwrap();
        let inter = (5..10).count() * 10;
        let union = 2 * 100 - inter;
        assert_eq!(iou, inter as f64 / union as f64);
        assert!((iou - 1.0 / 3.0).abs() < 1e-15);
        let e = BinaryMask::empty(40, 30);
        assert_eq!(mask_iou(&e, &e).unwrap(), 0.0);
        assert!(mask_iou(&a, &BinaryMask::empty(3, 3)).is_err());
        assert!((bbox_iou(&[0.0, 0.0, 10.0, 10.0], &[5.0, 0.0, 10.0, 10.0]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_predictions_score_one() {
        let gt = masked(&[(1, 0, 1.0, (0, 0, 10, 10)), (2, 0, 1.0, (20, 5, 8, 8)), (1, 1, 1.0, (3, 3, 5, 5))]);
        let mut preds = gt.clone();
        preds.detections[0].score = 0.3;
        preds.detections[1].score = 0.9;
        assert_eq!(map_at_iou(&preds, &gt, 0.5, false).unwrap().map, 1.0);
    }

    #[test]
    fn one_hit_one_spurious_is_half() {
        let gt = masked(&[(1, 0, 1.0, (0, 0, 10, 10)), (1, 0, 1.0, (20, 10, 10, 10))]);
        let preds = masked(&[(1, 0, 0.9, (0, 0, 10, 10)), (1, 0, 0.8, (0, 20, 5, 5))]);
        let r = map_at_iou(&preds, &gt, 0.5, false).unwrap();
        assert_eq!(r.per_class[&1], 0.5);
        assert_eq!(r.map, 0.5);
    }

    #[test]
    fn no_predictions_score_zero() {
        let gt = masked(&[(1, 0, 1.0, (0, 0, 10, 10))]);
        assert_eq!(map_at_iou(&DetectionSet::default(), &gt, 0.5, false).unwrap().map, 0.0);
    }

    #[test]
    fn false_positive_ranked_first_lowers_ap() {
        // FP at 0.9, TP at 0.8, TP at 0.7 for 2 GT: precisions 0, 1/2, 2/3,
        // recalls 0, 1/2, 1; envelope 2/3 at both recall steps.
        let gt = masked(&[(1, 0, 1.0, (0, 0, 10, 10)), (1, 0, 1.0, (20, 10, 10, 10))]);
        let preds = masked(&[(1, 0, 0.9, (0, 20, 5, 5)), (1, 0, 0.8, (0, 0, 10, 10)), (1, 0, 0.7, (20, 10, 10, 10))]);
        let ap = map_at_iou(&preds, &gt, 0.5, false).unwrap().map;
        assert!((ap - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_detection_counts_once_and_classes_average() {
        // Class 1: TP then duplicate FP, AP = 1. Class 2: missed, AP = 0.
        let gt = masked(&[(1, 0, 1.0, (0, 0, 10, 10)), (2, 0, 1.0, (20, 0, 10, 10))]);
        let preds = masked(&[(1, 0, 0.9, (0, 0, 10, 10)), (1, 0, 0.8, (0, 0, 10, 9)), (2, 0, 0.5, (0, 0, 10, 10))]);
        let r = map_at_iou(&preds, &gt, 0.5, false).unwrap();
        assert_eq!(r.per_class[&1], 1.0);
        assert_eq!(r.per_class[&2], 0.0);
        assert_eq!(r.map, 0.5);
        // Class-agnostic: TP, FP, FP over 2 GT gives 1/2.
        let r = map_at_iou(&preds, &gt, 0.5, true).unwrap();
        assert_eq!(r.per_class.len(), 1);
        assert_eq!(r.map, 0.5);
    }

    #[test]
    fn bbox_fallback_without_masks() {
        let gt = DetectionSet::new(vec![det(1, 0, 1.0, [0.0, 0.0, 10.0, 10.0])], vec![None]).unwrap();
        let preds = DetectionSet::new(vec![det(1, 0, 0.5, [1.0, 0.0, 10.0, 10.0])], vec![None]).unwrap();
        assert_eq!(map_at_iou(&preds, &gt, 0.5, false).unwrap().map, 1.0);
    }

    #[test]
    fn select_best_rules() {
        let gt = masked(&[(1, 0, 1.0, (0, 0, 10, 10)), (1, 0, 1.0, (20, 10, 10, 10))]);
        let good = CandidateModel {
            name: "good".into(),
            predictions: gt.clone(),
        };
        let half = CandidateModel {
            name: "half".into(),
            predictions: masked(&[(1, 0, 0.9, (0, 0, 10, 10)), (1, 0, 0.8, (0, 20, 5, 5))]),
        };
        assert_eq!(select_best(&[half.clone()], &gt, false).unwrap().0, "half");
        assert_eq!(select_best(&[half.clone(), good.clone()], &gt, false).unwrap().0, "good");
        let twin = CandidateModel {
            name: "twin".into(),
            ..good.clone()
        };
        assert_eq!(select_best(&[good, twin], &gt, false).unwrap().0, "good");
        assert!(select_best(&[], &gt, false).is_err());
    }

    #[test]
    fn non_finite_scores_rejected() {
        assert!(DetectionSet::new(vec![det(1, 0, f64::NAN, [0.0; 4])], vec![None]).is_err());
    }

    #[test]
    fn json_round_trip_with_masks() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("masks")).unwrap();
        let m = rect(2, 3, 6, 7);
        m.write_png(&dir.path().join("masks/a.png")).unwrap();
        let mut d = det(4, 2, 0.25, [2.0, 3.0, 6.0, 7.0]);
        d.mask_path = Some("masks/a.png".into());
        let set = DetectionSet::new(vec![d], vec![Some(m)]).unwrap();
        let path = dir.path().join("det.json");
        set.write_json(&path).unwrap();
        assert_eq!(DetectionSet::read(&path).unwrap(), set);
    }

    fn random_set(seed: u64, n: usize) -> (DetectionSet, DetectionSet) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut gt = Vec::new();
        let mut preds = Vec::new();
        for i in 0..n {
            let (x, y) = (rng.random_range(0..30), rng.random_range(0..20));
            let obj = rng.random_range(1..3);
            gt.push((obj, (i % 3) as u32, 1.0, (x, y, 8, 8)));
            if rng.random_bool(0.7) {
                let dx = rng.random_range(0..4);
                preds.push((obj, (i % 3) as u32, rng.random_range(0.01..1.0), ((x + dx).min(32), y, 8, 8)));
            }
            if rng.random_bool(0.3) {
                preds.push((obj, (i % 3) as u32, rng.random_range(0.01..1.0), (rng.random_range(0..32), rng.random_range(0..22), 8, 8)));
            }
        }
        (masked(&preds), masked(&gt))
    }

    proptest! {
        #[test]
        fn invariant_to_positive_score_scaling(seed in 0u64..1000, k in 0.01f64..100.0) {
            let (preds, gt) = random_set(seed, 12);
            let a = map_at_iou(&preds, &gt, 0.5, false).unwrap();
            let mut scaled = preds.clone();
            scaled.detections.iter_mut().for_each(|d| d.score *= k);
            let b = map_at_iou(&scaled, &gt, 0.5, false).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn lowest_score_false_positive_never_helps(seed in 0u64..1000) {
            let (preds, gt) = random_set(seed, 12);
            let before = map_at_iou(&preds, &gt, 0.5, false).unwrap();
            for obj in 1..3 {
                let mut more = preds.clone();
                more.detections.push(det(obj, 0, 0.0, [0.0, 0.0, 1.0, 1.0]));
                more.masks.push(Some(BinaryMask::empty(40, 30)));
                let after = map_at_iou(&more, &gt, 0.5, false).unwrap();
                for (c, ap) in &after.per_class {
                    prop_assert!(*ap <= before.per_class[c] + 1e-15);
                    prop_assert!((0.0..=1.0).contains(ap));
                }
            }
        }
    }
}
