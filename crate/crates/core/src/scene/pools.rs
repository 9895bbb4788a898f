//! Procedural stand-ins for photographic background and texture pools:
//! smooth colored value noise and two-color linear gradients. Backgrounds
//! draw from a muted palette and textures from a vivid one, so objects
//! contrast with their surroundings the way photographed objects tend to.

use std::sync::Arc;

use rand::Rng;

use crate::imaging::{Rgb3, RgbImage};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    /// Any RGB color.
    Uniform,
    /// Low-saturation colors of low to medium brightness.
    Muted,
    /// Saturated, bright colors of any hue.
    Vivid,
}

fn hsv(h: f32, s: f32, v: f32) -> Rgb3 {
    let c = v * s;
    let hp = (h.rem_euclid(1.0)) * 6.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

pub fn random_color(palette: Palette, rng: &mut impl Rng) -> Rgb3 {
    match palette {
        Palette::Uniform => [rng.gen(), rng.gen(), rng.gen()],
        Palette::Muted => hsv(rng.gen(), rng.gen_range(0.0..0.3), rng.gen_range(0.1..0.6)),
        Palette::Vivid => hsv(rng.gen(), rng.gen_range(0.6..1.0), rng.gen_range(0.7..1.0)),
    }
}

fn smoothstep(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

/// Value noise: random colors on a `(grid + 1)^2` lattice, smoothly
/// interpolated across a `size x size` image.
pub fn value_noise(size: usize, grid: usize, palette: Palette, rng: &mut impl Rng) -> RgbImage {
    let grid = grid.max(1);
    let lattice: Vec<Rgb3> = (0..(grid + 1) * (grid + 1)).map(|_| random_color(palette, rng)).collect();
    let at = |i: usize, j: usize| lattice[j * (grid + 1) + i];
    RgbImage::from_fn(size, size, |x, y| {
        let gx = (x as f32 + 0.5) / size as f32 * grid as f32;
        let gy = (y as f32 + 0.5) / size as f32 * grid as f32;
        let (i, j) = ((gx as usize).min(grid - 1), (gy as usize).min(grid - 1));
        let (tx, ty) = (smoothstep(gx - i as f32), smoothstep(gy - j as f32));
        std::array::from_fn(|c| {
            let top = at(i, j)[c] + (at(i + 1, j)[c] - at(i, j)[c]) * tx;
            let bottom = at(i, j + 1)[c] + (at(i + 1, j + 1)[c] - at(i, j + 1)[c]) * tx;
            top + (bottom - top) * ty
        })
    })
}

/// Linear blend between two random colors along a random direction.
pub fn linear_gradient(size: usize, palette: Palette, rng: &mut impl Rng) -> RgbImage {
    let (a, b) = (random_color(palette, rng), random_color(palette, rng));
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let half = size as f32 / 2.0;
    let reach = half * (dx.abs() + dy.abs());
    RgbImage::from_fn(size, size, |x, y| {
        let proj = (x as f32 + 0.5 - half) * dx + (y as f32 + 0.5 - half) * dy;
        let t = (proj / reach * 0.5 + 0.5).clamp(0.0, 1.0);
        [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * t)
    })
}

/// Alternating value-noise and gradient images.
fn pool(kind: &str, count: usize, size: usize, grid: usize, palette: Palette, seed: u64) -> Vec<Arc<RgbImage>> {
    (0..count)
        .map(|i| {
            let mut rng = stream(derive_seed(seed, &format!("{kind}/{i}")));
            let img = if i % 2 == 0 {
                value_noise(size, grid, palette, &mut rng)
            } else {
                linear_gradient(size, palette, &mut rng)
            };
            Arc::new(img.quantize())
        })
        .collect()
}

pub fn background_pool(count: usize, size: usize, seed: u64) -> Vec<Arc<RgbImage>> {
    pool("background", count, size, 3, Palette::Muted, seed)
}

pub fn texture_pool(count: usize, size: usize, seed: u64) -> Vec<Arc<RgbImage>> {
    pool("texture", count, size, 2, Palette::Vivid, seed)
}
