//! Raster types: 16-bit depth maps, RGB images and binary masks, plus PNG I/O.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};

use crate::cloud::Rgb;
use crate::error::{Error, Result};

/// Raw 16-bit depth. `0` means no measurement; metric depth in meters is
/// `raw * depth_scale * 0.001` (`depth_scale` is millimeters per unit).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub raw: Vec<u16>,
    pub depth_scale: f64,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, raw: Vec<u16>, depth_scale: f64) -> Result<Self> {
        if raw.len() != width as usize * height as usize {
            return Err(Error::SizeMismatch(format!(
                "depth buffer has {} values for {width}x{height}",
                raw.len()
            )));
        }
        if !(depth_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "depth_scale must be positive, got {depth_scale}"
            )));
        }
        Ok(Self {
            width,
            height,
            raw,
            depth_scale,
        })
    }

    pub fn zeros(width: u32, height: u32, depth_scale: f64) -> Self {
        Self::new(width, height, vec![0; width as usize * height as usize], depth_scale)
            .expect("consistent size")
    }

    #[inline]
    pub fn raw_at(&self, u: u32, v: u32) -> u16 {
        self.raw[(v * self.width + u) as usize]
    }

    /// Depth in meters, `None` for missing measurements.
    #[inline]
    pub fn meters_at(&self, u: u32, v: u32) -> Option<f64> {
        match self.raw_at(u, v) {
            0 => None,
            r => Some(r as f64 * self.depth_scale * 1e-3),
        }
    }

    /// Quantizes a metric depth to a raw value; out-of-range depths give 0.
    pub fn quantize_meters(&self, z: f64) -> u16 {
        let r = (z * 1e3 / self.depth_scale).round();
        if r >= 1.0 && r <= u16::MAX as f64 {
            r as u16
        } else {
            0
        }
    }

    pub fn read_png(path: &Path, depth_scale: f64) -> Result<Self> {
        let img = image::open(path).map_err(|e| image_err(path, e))?;
        let luma = img.into_luma16();
        let (w, h) = luma.dimensions();
        Self::new(w, h, luma.into_raw(), depth_scale)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width, self.height, self.raw.clone())
                .expect("consistent size");
        buf.save(path).map_err(|e| image_err(path, e))
    }
}

/// 8-bit RGB, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<Rgb>,
}

impl ColorImage {
    pub fn new(width: u32, height: u32, pixels: Vec<Rgb>) -> Result<Self> {
        if pixels.len() != width as usize * height as usize {
            return Err(Error::SizeMismatch(format!(
                "color buffer has {} pixels for {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, c: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![c; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        self.pixels[(y * self.width + x) as usize] = c;
    }

    /// Mean of the three channels, in `[0, 255]`.
    pub fn to_gray(&self) -> Vec<f32> {
        self.pixels
            .iter()
            .map(|p| (p[0] as f32 + p[1] as f32 + p[2] as f32) / 3.0)
            .collect()
    }

    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| image_err(path, e))?.into_rgb8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| p.0).collect();
        Self::new(w, h, pixels)
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let raw: Vec<u8> = self.pixels.iter().flat_map(|p| p.iter().copied()).collect();
        let buf = RgbImage::from_raw(self.width, self.height, raw).expect("consistent size");
        buf.save(path).map_err(|e| image_err(path, e))
    }
}

/// Axis-aligned pixel box `[x, y, w, h]`.
pub type PixelBox = [u32; 4];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::SizeMismatch(format!(
                "mask has {} bits for {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn same_size(&self, width: u32, height: u32) -> bool {
        self.width == width && self.height == height
    }

    /// Tight bounding box of the set pixels.
    pub fn bbox(&self) -> Option<PixelBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != u32::MAX).then(|| [x0, y0, x1 - x0 + 1, y1 - y0 + 1])
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    /// Reads an 8-bit PNG; nonzero pixels are foreground.
    pub fn read_png(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| image_err(path, e))?.into_luma8();
        let (w, h) = img.dimensions();
        let bits = img.pixels().map(|p| p.0[0] != 0).collect();
        Self::new(w, h, bits)
    }

    /// Writes foreground as 255, background as 0.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let raw = self.bits.iter().map(|b| if *b { 255u8 } else { 0 }).collect();
        let buf = GrayImage::from_raw(self.width, self.height, raw).expect("consistent size");
        buf.save(path).map_err(|e| image_err(path, e))
    }
}

/// Pixel offsets of a digital disk: all `(dx, dy)` with `dx² + dy² <= r²`.
pub fn disk_offsets(radius: u32) -> Vec<(i32, i32)> {
    let r = radius as i32;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Morphological dilation with a disk structuring element.
pub fn dilate_mask(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let r = radius as i32;
    // Half-width of the disk row at each vertical offset.
    let half: Vec<i32> = (-r..=r)
        .map(|dy| ((r * r - dy * dy) as f64).sqrt().floor() as i32)
        .collect();
    let (w, h) = (mask.width as i32, mask.height as i32);
    let mut out = BinaryMask::empty(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as u32, y as u32) {
                continue;
            }
            for (k, dy) in (-r..=r).enumerate() {
                let yy = y + dy;
                if yy < 0 || yy >= h {
                    continue;
                }
                let lo = (x - half[k]).max(0);
                let hi = (x + half[k]).min(w - 1);
                let row = (yy * w) as usize;
                for b in &mut out.bits[row + lo as usize..=row + hi as usize] {
                    *b = true;
                }
            }
        }
    }
    out
}

pub(crate) fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}
