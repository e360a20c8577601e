//! Cut-and-paste composites: object crops pasted onto backgrounds under
//! random similarity transforms.

use std::path::Path;

use ppf_core::cloud::Rgb;
use ppf_core::image::{BinaryMask, ColorImage, PixelBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SynthError};

/// An RGBA object cutout with its class id.
#[derive(Debug, Clone, PartialEq)]
pub struct Crop {
    pub class_id: u32,
    pub width: u32,
    pub height: u32,
    pub rgba: Vec<[u8; 4]>,
}

impl Crop {
    pub fn new(class_id: u32, width: u32, height: u32, rgba: Vec<[u8; 4]>) -> Result<Self> {
        if width == 0 || height == 0 || rgba.len() != (width * height) as usize {
            return Err(SynthError::InvalidArgument(format!(
                "crop of {width}x{height} with {} pixels",
                rgba.len()
            )));
        }
        Ok(Self {
            class_id,
            width,
            height,
            rgba,
        })
    }

    pub fn read_png(path: &Path, class_id: u32) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| SynthError::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_rgba8();
        let (w, h) = img.dimensions();
        Self::new(class_id, w, h, img.pixels().map(|p| p.0).collect())
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 4] {
        self.rgba[(y * self.width + x) as usize]
    }

    /// Pixels with nonzero alpha.
    pub fn footprint(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(x, y)[3] > 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposeParams {
    pub max_objects: usize,
    /// Uniform scale range.
    pub scale: (f64, f64),
    /// Uniform rotation range, radians.
    pub rotation: (f64, f64),
}

impl Default for ComposeParams {
    fn default() -> Self {
        Self {
            max_objects: 20,
            scale: (0.5, 2.0),
            rotation: (0.0, std::f64::consts::TAU),
        }
    }
}

impl ComposeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_objects >= 1
            && self.scale.0 > 0.0
            && self.scale.0 <= self.scale.1
            && self.scale.1.is_finite()
            && self.rotation.0 <= self.rotation.1
            && self.rotation.1.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidArgument(format!("bad compose parameters {self:?}")))
        }
    }
}

/// One visible pasted object.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub class_id: u32,
    /// Pixels of the paste not covered by later pastes.
    pub mask: BinaryMask,
    pub bbox: PixelBox,
}

/// A paste's placement: scale, rotation and the top-left corner of the
/// transformed crop's bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Placement {
    scale: f64,
    angle: f64,
    x0: u32,
    y0: u32,
    w: u32,
    h: u32,
}

fn transformed_size(crop: &Crop, scale: f64, angle: f64) -> (u32, u32) {
    let (c, s) = (angle.cos().abs(), angle.sin().abs());
    let (w, h) = (crop.width as f64 * scale, crop.height as f64 * scale);
    // Snap float noise so an identity transform keeps the crop size.
    let snap = |v: f64| (v - 1e-9).ceil().max(1.0) as u32;
    (snap(w * c + h * s), snap(w * s + h * c))
}

/// Pastes `crop` with nearest-neighbor inverse mapping and alpha blending.
/// Returns the pixels written with nonzero alpha.
fn paste(img: &mut ColorImage, crop: &Crop, pl: &Placement) -> BinaryMask {
    let mut footprint = BinaryMask::empty(img.width, img.height);
    let (cos, sin) = (pl.angle.cos(), pl.angle.sin());
    let (cx, cy) = (pl.x0 as f64 + pl.w as f64 / 2.0, pl.y0 as f64 + pl.h as f64 / 2.0);
    for y in pl.y0..pl.y0 + pl.h {
        for x in pl.x0..pl.x0 + pl.w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let sx = (cos * dx + sin * dy) / pl.scale + crop.width as f64 / 2.0;
            let sy = (-sin * dx + cos * dy) / pl.scale + crop.height as f64 / 2.0;
            if sx < 0.0 || sy < 0.0 {
                continue;
            }
            let (sx, sy) = (sx.floor() as u32, sy.floor() as u32);
            if sx >= crop.width || sy >= crop.height {
                continue;
            }
            let [r, g, b, a] = crop.get(sx, sy);
            if a == 0 {
                continue;
            }
            let dst = img.get(x, y);
            let blend = |s: u8, d: u8| ((s as u32 * a as u32 + d as u32 * (255 - a as u32) + 127) / 255) as u8;
            let out: Rgb = [blend(r, dst[0]), blend(g, dst[1]), blend(b, dst[2])];
            img.set(x, y, out);
            footprint.set(x, y, true);
        }
    }
    footprint
}

/// Pastes `k ~ U{1..max_objects}` random crops onto `background`, each with
/// a random scale, rotation and position, in draw order. Pastes that do not
/// fit in the background are skipped. Annotations keep only pixels not
/// covered by later pastes; fully covered pastes have no annotation.
pub fn compose_training_image(
    crops: &[Crop],
    background: &ColorImage,
    params: &ComposeParams,
    seed: u64,
) -> Result<(ColorImage, Vec<Annotation>)> {
    if crops.is_empty() {
        return Err(SynthError::Empty("crop list"));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (bw, bh) = (background.width, background.height);
    let k = rng.random_range(1..=params.max_objects);
    let mut pastes = Vec::with_capacity(k);
    for _ in 0..k {
        let crop = &crops[rng.random_range(0..crops.len())];
        let scale = rng.random_range(params.scale.0..=params.scale.1);
        let angle = rng.random_range(params.rotation.0..=params.rotation.1);
        let (w, h) = transformed_size(crop, scale, angle);
        let (fx, fy): (f64, f64) = (rng.random(), rng.random());
        if w > bw || h > bh {
            continue;
        }
        let pl = Placement {
            scale,
            angle,
            x0: ((fx * (bw - w + 1) as f64) as u32).min(bw - w),
            y0: ((fy * (bh - h + 1) as f64) as u32).min(bh - h),
            w,
            h,
        };
        pastes.push((crop, pl));
    }
    Ok(composite(background, &pastes))
}

fn composite(background: &ColorImage, pastes: &[(&Crop, Placement)]) -> (ColorImage, Vec<Annotation>) {
    let mut img = background.clone();
    let (bw, bh) = (img.width, img.height);
    let mut owner: Vec<u32> = vec![u32::MAX; (bw * bh) as usize];
    for (i, (crop, pl)) in pastes.iter().enumerate() {
        let fp = paste(&mut img, crop, pl);
        for (o, b) in owner.iter_mut().zip(&fp.bits) {
            if *b {
                *o = i as u32;
            }
        }
    }
    let anns = pastes
        .iter()
        .enumerate()
        .filter_map(|(i, (crop, _))| {
            let mask = BinaryMask::new(bw, bh, owner.iter().map(|&o| o == i as u32).collect()).expect("sized");
            mask.bbox().map(|bbox| Annotation {
                class_id: crop.class_id,
                mask,
                bbox,
            })
        })
        .collect();
    (img, anns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Opaque disk of radius `r` in a `2r+1` square.
    fn disk(class_id: u32, r: u32, color: Rgb) -> Crop {
        let n = 2 * r + 1;
        let rgba = (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as i32 - r as i32, (i / n) as i32 - r as i32);
                if x * x + y * y <= (r * r) as i32 {
                    [color[0], color[1], color[2], 255]
                } else {
                    [0; 4]
                }
            })
            .collect();
        Crop::new(class_id, n, n, rgba).unwrap()
    }

    fn identity() -> ComposeParams {
        ComposeParams {
            max_objects: 1,
            scale: (1.0, 1.0),
            rotation: (0.0, 0.0),
        }
    }

    #[test]
    fn identity_paste_mask_is_the_alpha_footprint() {
        let crop = disk(3, 6, [255, 0, 0]);
        let bg = ColorImage::filled(64, 48, [0, 0, 200]);
        for seed in 0..20 {
            let (img, anns) = compose_training_image(std::slice::from_ref(&crop), &bg, &identity(), seed).unwrap();
            assert_eq!(anns.len(), 1);
            let a = &anns[0];
            assert_eq!(a.class_id, 3);
            let [x0, y0, w, h] = a.bbox;
            assert_eq!((w, h), (13, 13));
            let fp = crop.footprint();
            let expect = BinaryMask::from_fn(64, 48, |x, y| {
                x >= x0 && y >= y0 && x < x0 + 13 && y < y0 + 13 && fp.get(x - x0, y - y0)
            });
            assert_eq!(a.mask, expect);
            for y in 0..48 {
                for x in 0..64 {
                    let c = if expect.get(x, y) { [255, 0, 0] } else { [0, 0, 200] };
                    assert_eq!(img.get(x, y), c);
                }
            }
        }
    }

    #[test]
    fn full_occlusion_drops_the_first_annotation() {
        let a = Crop::new(1, 16, 16, vec![[9, 9, 9, 255]; 256]).unwrap();
        let b = Crop::new(2, 16, 16, vec![[7, 7, 7, 255]; 256]).unwrap();
        let bg = ColorImage::filled(16, 16, [0, 0, 0]);
        let pl = Placement {
            scale: 1.0,
            angle: 0.0,
            x0: 0,
            y0: 0,
            w: 16,
            h: 16,
        };
        let (img, anns) = composite(&bg, &[(&a, pl), (&b, pl)]);
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].class_id, 2);
        assert_eq!(anns[0].mask.count(), 256);
        assert_eq!(img.get(3, 3), [7, 7, 7]);
    }

    #[test]
    fn oversized_pastes_are_skipped() {
        let big = disk(1, 40, [1, 1, 1]);
        let bg = ColorImage::filled(32, 32, [0, 0, 0]);
        let (img, anns) = compose_training_image(&[big], &bg, &identity(), 0).unwrap();
        assert!(anns.is_empty());
        assert_eq!(img, bg);
    }

    #[test]
    fn half_alpha_blends() {
        let crop = Crop::new(1, 2, 2, vec![[200, 100, 0, 128]; 4]).unwrap();
        let bg = ColorImage::filled(2, 2, [0, 100, 200]);
        let (img, anns) = compose_training_image(&[crop], &bg, &identity(), 0).unwrap();
        assert_eq!(img.get(0, 0), [100, 100, 100]);
        assert_eq!(anns[0].mask.count(), 4);
    }

    #[test]
    fn errors() {
        let bg = ColorImage::filled(8, 8, [0; 3]);
        assert!(compose_training_image(&[], &bg, &identity(), 0).is_err());
        let mut p = identity();
        p.max_objects = 0;
        assert!(compose_training_image(&[disk(1, 2, [0; 3])], &bg, &p, 0).is_err());
        assert!(Crop::new(1, 2, 2, vec![[0; 4]; 3]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn annotations_disjoint_bounded_and_within_footprints(seed in any::<u64>()) {
            let crops = [disk(1, 5, [200, 0, 0]), disk(2, 9, [0, 200, 0]), disk(3, 3, [0, 0, 200])];
            let bg = ColorImage::filled(64, 64, [50, 50, 50]);
            let (img, anns) = compose_training_image(&crops, &bg, &ComposeParams::default(), seed).unwrap();
            prop_assert!(anns.len() <= 20);
            let mut union = BinaryMask::empty(64, 64);
            for a in &anns {
                prop_assert!(!a.mask.is_empty());
                for (u, m) in union.bits.iter_mut().zip(&a.mask.bits) {
                    prop_assert!(!(*u && *m));
                    *u |= *m;
                }
                prop_assert_eq!(Some(a.bbox), a.mask.bbox());
            }
            // Annotated pixels were painted; untouched pixels keep the background.
            for y in 0..64 {
                for x in 0..64 {
                    if union.get(x, y) {
                        prop_assert_ne!(img.get(x, y), [50, 50, 50]);
                    }
                }
            }
        }
    }
}
