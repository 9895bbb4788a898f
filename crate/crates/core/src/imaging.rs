//! In-memory float images, bilinear resampling, and lossless file IO.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage as ByteImage};

use crate::error::{Error, Result};

pub type Rgb3 = [f32; 3];

/// RGB image with channels in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb3>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, fill: Rgb3) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb3) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb3>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::invalid(
                "image",
                format!("{} pixels for {width}x{height}", pixels.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb3] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb3 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: Rgb3) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn map(&self, f: impl Fn(Rgb3) -> Rgb3) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers sit on
    /// integers), with coordinates clamped to the inclusive index rectangle
    /// `[x0, x1] x [y0, y1]`.
    pub fn sample_bilinear_in(
        &self,
        x: f64,
        y: f64,
        (x0, y0, x1, y1): (usize, usize, usize, usize),
    ) -> Rgb3 {
        let x = x.clamp(x0 as f64, x1 as f64);
        let y = y.clamp(y0 as f64, y1 as f64);
        let xf = x.floor();
        let yf = y.floor();
        let xa = xf as usize;
        let ya = yf as usize;
        let xb = (xa + 1).min(x1);
        let yb = (ya + 1).min(y1);
        let tx = (x - xf) as f32;
        let ty = (y - yf) as f32;
        let p00 = self.get(xa, ya);
        let p10 = self.get(xb, ya);
        let p01 = self.get(xa, yb);
        let p11 = self.get(xb, yb);
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let top = p00[c] + (p10[c] - p00[c]) * tx;
            let bottom = p01[c] + (p11[c] - p01[c]) * tx;
            out[c] = top + (bottom - top) * ty;
        }
        out
    }

    /// Resample the integer pixel rectangle `[x0, x1) x [y0, y1)` to
    /// `out_w x out_h` with half-pixel-centered bilinear interpolation.
    /// Samples never read outside the rectangle.
    pub fn resample_region(
        &self,
        (x0, y0, x1, y1): (usize, usize, usize, usize),
        out_w: usize,
        out_h: usize,
    ) -> Self {
        assert!(x0 < x1 && y0 < y1 && x1 <= self.width && y1 <= self.height);
        let sx = (x1 - x0) as f64 / out_w as f64;
        let sy = (y1 - y0) as f64 / out_h as f64;
        let clamp_rect = (x0, y0, x1 - 1, y1 - 1);
        Self::from_fn(out_w, out_h, |i, j| {
            let x = x0 as f64 + (i as f64 + 0.5) * sx - 0.5;
            let y = y0 as f64 + (j as f64 + 0.5) * sy - 0.5;
            self.sample_bilinear_in(x, y, clamp_rect)
        })
    }

    pub fn resize(&self, out_w: usize, out_h: usize) -> Self {
        if out_w == self.width && out_h == self.height {
            return self.clone();
        }
        self.resample_region((0, 0, self.width, self.height), out_w, out_h)
    }

    /// Round every channel to the nearest 8-bit level, so the in-memory image
    /// equals what a lossless 8-bit file reproduces.
    pub fn quantize(&self) -> Self {
        self.map(|p| p.map(|c| to_byte(c) as f32 / 255.0))
    }

    pub fn to_bytes(&self) -> ByteImage {
        let mut out = ByteImage::new(self.width as u32, self.height as u32);
        for (dst, src) in out.pixels_mut().zip(&self.pixels) {
            *dst = Rgb(src.map(to_byte));
        }
        out
    }

    pub fn from_bytes(img: &ByteImage) -> Self {
        let pixels = img
            .pixels()
            .map(|p| p.0.map(|c| c as f32 / 255.0))
            .collect();
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels,
        }
    }

    /// Write as PNG, or binary PPM when the extension is `.ppm`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        };
        self.to_bytes()
            .save_with_format(path, format)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_bytes(&img.to_rgb8()))
    }
}

#[inline]
fn to_byte(c: f32) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rec.601 luma.
#[inline]
pub fn luminance(p: Rgb3) -> f32 {
    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
}

/// RGBA layer with straight (non-premultiplied) alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbaImage {
    width: usize,
    height: usize,
    pixels: Vec<[f32; 4]>,
}

impl RgbaImage {
    pub fn transparent(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![[0.0; 4]; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f32; 4]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 4] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: [f32; 4]) {
        self.pixels[y * self.width + x] = value.map(|c| c.clamp(0.0, 1.0));
    }

    pub fn alpha(&self, x: usize, y: usize) -> f32 {
        self.get(x, y)[3]
    }

    /// Tight `(x0, y0, x1, y1)` bounds of pixels with non-zero alpha, with
    /// exclusive upper corners. `None` when nothing is covered.
    pub fn alpha_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.alpha(x, y) > 0.0 {
                    bounds = Some(match bounds {
                        None => (x, y, x + 1, y + 1),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x + 1), d.max(y + 1)),
                    });
                }
            }
        }
        bounds
    }

    pub fn covered_count(&self) -> usize {
        self.pixels.iter().filter(|p| p[3] > 0.0).count()
    }
}
