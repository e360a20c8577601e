//! Training and validation sets of cut-and-paste composites.

use std::fs;
use std::path::Path;

use ppf_core::bop;
use ppf_core::image::ColorImage;
use ppf_eval::detection::Detection;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::compose::{compose_training_image, Annotation, ComposeParams, Crop};
use crate::error::{Result, SynthError};
use crate::scene::item_seed;

pub const DETECTIONS_FILE: &str = "detections.json";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSetParams {
    pub n_images: usize,
    pub val_fraction: f64,
    /// Fraction of training images that get one augmentation.
    pub augment_fraction: f64,
    pub compose: ComposeParams,
    pub seed: u64,
}

impl Default for TrainSetParams {
    fn default() -> Self {
        Self {
            n_images: 10_000,
            val_fraction: 0.1,
            augment_fraction: 0.7,
            compose: ComposeParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    None,
    FlipHorizontal,
    /// Per-channel multipliers.
    ColorScale([f64; 3]),
}

/// `(validation, training)` image counts: the first `ceil(n * val_fraction)`
/// indices go to validation.
pub fn split_counts(n_images: usize, val_fraction: f64) -> (usize, usize) {
    let n_val = ((n_images as f64 * val_fraction) - 1e-9).ceil().max(0.0) as usize;
    let n_val = n_val.min(n_images);
    (n_val, n_images - n_val)
}

/// Applies `aug` to an image and its annotations.
pub fn augment(img: &ColorImage, anns: &[Annotation], aug: Augmentation) -> (ColorImage, Vec<Annotation>) {
    match aug {
        Augmentation::None => (img.clone(), anns.to_vec()),
        Augmentation::FlipHorizontal => {
            let w = img.width;
            let mut out = img.clone();
            for y in 0..img.height {
                for x in 0..w {
                    out.set(x, y, img.get(w - 1 - x, y));
                }
            }
            let anns = anns
                .iter()
                .map(|a| {
                    let mask = a.mask.flip_horizontal();
                    Annotation {
                        class_id: a.class_id,
                        bbox: mask.bbox().expect("flip keeps pixels"),
                        mask,
                    }
                })
                .collect();
            (out, anns)
        }
        Augmentation::ColorScale(s) => {
            let mut out = img.clone();
            for y in 0..img.height {
                for x in 0..img.width {
                    let c = img.get(x, y);
                    let f = |i: usize| (c[i] as f64 * s[i]).round().clamp(0.0, 255.0) as u8;
                    out.set(x, y, [f(0), f(1), f(2)]);
                }
            }
            (out, anns.to_vec())
        }
    }
}

/// Everything image `index` of a training set is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImagePlan {
    pub background: usize,
    pub compose_seed: u64,
    pub augmentation: Augmentation,
    pub validation: bool,
}

pub fn plan_image(params: &TrainSetParams, n_backgrounds: usize, index: usize) -> ImagePlan {
    let (n_val, _) = split_counts(params.n_images, params.val_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed(params.seed, index as u64));
    let background = rng.random_range(0..n_backgrounds);
    let compose_seed = rng.random();
    let validation = index < n_val;
    let roll: f64 = rng.random();
    let augmentation = if validation || roll >= params.augment_fraction {
        Augmentation::None
    } else if rng.random_bool(0.5) {
        Augmentation::FlipHorizontal
    } else {
        Augmentation::ColorScale([
            rng.random_range(0.8..=1.2),
            rng.random_range(0.8..=1.2),
            rng.random_range(0.8..=1.2),
        ])
    };
    ImagePlan {
        background,
        compose_seed,
        augmentation,
        validation,
    }
}

/// Composite and annotations of image `index`.
pub fn build_image(
    crops: &[Crop],
    backgrounds: &[ColorImage],
    params: &TrainSetParams,
    index: usize,
) -> Result<(ImagePlan, ColorImage, Vec<Annotation>)> {
    let plan = plan_image(params, backgrounds.len(), index);
    let (img, anns) = compose_training_image(crops, &backgrounds[plan.background], &params.compose, plan.compose_seed)?;
    let (img, anns) = augment(&img, &anns, plan.augmentation);
    Ok((plan, img, anns))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainSetSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub n_annotations: usize,
    pub max_annotations_per_image: usize,
}

/// Writes `<out>/{train,val}/rgb/<id>.png`, `masks/<id>_<k>.png` and a
/// detections file per split. Images are built in parallel; the output
/// depends only on the inputs and the seed.
pub fn build_training_set(
    crops: &[Crop],
    backgrounds: &[ColorImage],
    params: &TrainSetParams,
    out_dir: &Path,
) -> Result<TrainSetSummary> {
    if crops.is_empty() {
        return Err(SynthError::Empty("crop list"));
    }
    if backgrounds.is_empty() {
        return Err(SynthError::Empty("background list"));
    }
    if !(0.0..=1.0).contains(&params.val_fraction) || !(0.0..=1.0).contains(&params.augment_fraction) {
        return Err(SynthError::InvalidArgument("fractions must lie in [0, 1]".into()));
    }
    params.compose.validate()?;
    let (n_val, n_train) = split_counts(params.n_images, params.val_fraction);
    for split in ["train", "val"] {
        for sub in ["rgb", "masks"] {
            let d = out_dir.join(split).join(sub);
            fs::create_dir_all(&d).map_err(|e| SynthError::io(&d, e))?;
        }
    }
    let per_image: Vec<(bool, Vec<Detection>)> = (0..params.n_images)
        .into_par_iter()
        .map(|i| {
            let (plan, img, anns) = build_image(crops, backgrounds, params, i)?;
            let (split, im_id) = if plan.validation { ("val", i) } else { ("train", i - n_val) };
            let dir = out_dir.join(split);
            img.write_png(&dir.join("rgb").join(format!("{im_id:06}.png")))?;
            let mut dets = Vec::with_capacity(anns.len());
            for (k, a) in anns.iter().enumerate() {
                let name = format!("masks/{im_id:06}_{k:03}.png");
                a.mask.write_png(&dir.join(&name))?;
                let [x, y, w, h] = a.bbox;
                dets.push(Detection {
                    scene_id: 0,
                    im_id: im_id as u32,
                    obj_id: a.class_id,
                    score: 1.0,
                    mask_path: Some(name),
                    bbox: [x as f64, y as f64, w as f64, h as f64],
                });
            }
            Ok((plan.validation, dets))
        })
        .collect::<Result<_>>()?;
    let mut summary = TrainSetSummary {
        n_train,
        n_val,
        n_annotations: 0,
        max_annotations_per_image: 0,
    };
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (is_val, dets) in per_image {
        summary.n_annotations += dets.len();
        summary.max_annotations_per_image = summary.max_annotations_per_image.max(dets.len());
        if is_val { &mut val } else { &mut train }.extend(dets);
    }
    bop::write_json(&out_dir.join("train").join(DETECTIONS_FILE), &train)?;
    bop::write_json(&out_dir.join("val").join(DETECTIONS_FILE), &val)?;
    Ok(summary)
}
