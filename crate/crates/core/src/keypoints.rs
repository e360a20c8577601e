//! Corner keypoints with normalized gray patches, matched by mutual best
//! normalized cross-correlation.

use crate::image::{BinaryMask, ColorImage};

pub const PATCH_RADIUS: i32 = 4;
pub const PATCH_LEN: usize = 81;
pub const NMS_RADIUS: f32 = 5.0;
pub const MAX_KEYPOINTS: usize = 200;
pub const RESPONSE_PERCENTILE: f32 = 0.9;
pub const MIN_NCC: f32 = 0.8;
pub const MAX_MATCH_DISTANCE: f32 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    /// `(x, y)` pixel positions.
    pub positions: Vec<(u32, u32)>,
    /// Zero-mean, unit-norm 9x9 gray patches, row-major.
    pub descriptors: Vec<[f32; PATCH_LEN]>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Smaller eigenvalue of the gradient structure tensor summed over a 3x3
/// window; zero within two pixels of the border.
pub fn corner_response(gray: &[f32], width: u32, height: u32) -> Vec<f32> {
    let (w, h) = (width as usize, height as usize);
    let mut ix = vec![0f32; w * h];
    let mut iy = vec![0f32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            ix[i] = 0.5 * (gray[i + 1] - gray[i - 1]);
            iy[i] = 0.5 * (gray[i + w] - gray[i - w]);
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 2..h.saturating_sub(2) {
        for x in 2..w.saturating_sub(2) {
            let (mut a, mut b, mut c) = (0f32, 0f32, 0f32);
            for dy in 0..3 {
                for dx in 0..3 {
                    let i = (y + dy - 1) * w + (x + dx - 1);
                    a += ix[i] * ix[i];
                    b += ix[i] * iy[i];
                    c += iy[i] * iy[i];
                }
            }
            let half_tr = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            out[y * w + x] = (half_tr - disc).max(0.0);
        }
    }
    out
}

fn patch(gray: &[f32], width: u32, x: u32, y: u32) -> Option<[f32; PATCH_LEN]> {
    let mut p = [0f64; PATCH_LEN];
    let mut k = 0;
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        for dx in -PATCH_RADIUS..=PATCH_RADIUS {
            let (xx, yy) = ((x as i32 + dx) as usize, (y as i32 + dy) as usize);
            p[k] = gray[yy * width as usize + xx] as f64;
            k += 1;
        }
    }
    let mean = p.iter().sum::<f64>() / PATCH_LEN as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    // Under one gray level of total contrast counts as flat.
    if norm < 1.0 {
        return None;
    }
    Some(p.map(|v| (v / norm) as f32))
}

/// Corners inside `region`: responses above the 90th percentile of the
/// region's responses, greedily non-max suppressed at radius 5 px in order of
/// decreasing response, at most 200. Points whose patch would leave the image
/// or is flat are skipped.
pub fn detect_keypoints(img: &ColorImage, region: &BinaryMask) -> KeypointSet {
    let (w, h) = (img.width, img.height);
    let gray = img.to_gray();
    let resp = corner_response(&gray, w, h);
    let margin = PATCH_RADIUS as u32;
    let mut in_region: Vec<(u32, u32)> = Vec::new();
    for y in margin..h.saturating_sub(margin) {
        for x in margin..w.saturating_sub(margin) {
            if region.get(x, y) {
                in_region.push((x, y));
            }
        }
    }
    let mut values: Vec<f32> = in_region.iter().map(|&(x, y)| resp[(y * w + x) as usize]).collect();
    let mut empty = KeypointSet {
        positions: Vec::new(),
        descriptors: Vec::new(),
    };
    if values.is_empty() {
        return empty;
    }
    values.sort_by(f32::total_cmp);
    let idx = ((values.len() - 1) as f32 * RESPONSE_PERCENTILE).floor() as usize;
    let cut = values[idx].max(1e-6);
    let mut cand: Vec<(f32, u32, u32)> = in_region
        .into_iter()
        .map(|(x, y)| (resp[(y * w + x) as usize], x, y))
        .filter(|c| c.0 > cut)
        .collect();
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    let r2 = NMS_RADIUS * NMS_RADIUS;
    for (_, x, y) in cand {
        if empty.len() >= MAX_KEYPOINTS {
            break;
        }
        let close = empty.positions.iter().any(|&(px, py)| {
            let (dx, dy) = (px as f32 - x as f32, py as f32 - y as f32);
            dx * dx + dy * dy <= r2
        });
        if close {
            continue;
        }
        if let Some(d) = patch(&gray, w, x, y) {
            empty.positions.push((x, y));
            empty.descriptors.push(d);
        }
    }
    empty
}

fn ncc(a: &[f32; PATCH_LEN], b: &[f32; PATCH_LEN]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// NCC values this close are treated as equal.
const NCC_TIE: f32 = 1e-5;

/// For each keypoint of `from`, the best keypoint of `to` within 20 px by
/// NCC, ties going to the closer, then lower-index one.
fn best_matches(from: &KeypointSet, to: &KeypointSet) -> Vec<Option<(usize, f32)>> {
    let r2 = MAX_MATCH_DISTANCE * MAX_MATCH_DISTANCE;
    from.positions
        .iter()
        .zip(&from.descriptors)
        .map(|(&(x, y), d)| {
            let mut best: Option<(usize, f32, f32)> = None;
            for (j, (&(u, v), e)) in to.positions.iter().zip(&to.descriptors).enumerate() {
                let (dx, dy) = (u as f32 - x as f32, v as f32 - y as f32);
                let dist2 = dx * dx + dy * dy;
                if dist2 > r2 {
                    continue;
                }
                let s = ncc(d, e);
                let better = match best {
                    None => true,
                    Some((_, bs, bd)) => s > bs + NCC_TIE || ((s - bs).abs() <= NCC_TIE && dist2 < bd),
                };
                if better {
                    best = Some((j, s, dist2));
                }
            }
            best.map(|(j, s, _)| (j, s))
        })
        .collect()
}

/// Mutual best matches between two keypoint sets with NCC >= 0.8.
pub fn match_keypoint_sets(a: &KeypointSet, b: &KeypointSet) -> Vec<(usize, usize)> {
    let ab = best_matches(a, b);
    let ba = best_matches(b, a);
    ab.iter()
        .enumerate()
        .filter_map(|(i, m)| {
            let (j, s) = (*m)?;
            (s >= MIN_NCC && ba[j].map(|(k, _)| k) == Some(i)).then_some((i, j))
        })
        .collect()
}

/// Number of mutual corner matches between `a` and `b` inside `region`.
pub fn match_keypoints(a: &ColorImage, b: &ColorImage, region: &BinaryMask) -> usize {
    assert_eq!((a.width, a.height), (b.width, b.height), "images must have equal size");
    let ka = detect_keypoints(a, region);
    let kb = detect_keypoints(b, region);
    match_keypoint_sets(&ka, &kb).len()
}
