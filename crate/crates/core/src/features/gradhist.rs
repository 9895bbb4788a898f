use std::f64::consts::PI;

use super::FeatureVector;
use crate::imaging::{luminance, RgbImage};

const CELL_EPS: f64 = 1e-6;

/// Histogram of unsigned gradient orientations.
///
/// Gradients are central differences of the luma image (edge pixels reuse
/// themselves as the missing neighbour). Each pixel votes its magnitude into
/// one of `bins` orientation bins over `[0, pi)` in the cell containing it.
/// Cells form a `cells x cells` grid; every cell histogram is divided by its
/// L2 norm plus `1e-6`, and the concatenation is L2-normalized.
pub fn extract_gradhist(patch: &RgbImage, cells: usize, bins: usize) -> FeatureVector {
    let (w, h) = (patch.width(), patch.height());
    let gray: Vec<f64> = patch.pixels().iter().map(|&p| luminance(p) as f64).collect();
    let at = |x: usize, y: usize| gray[y * w + x];
    let mut hist = vec![0.0f64; cells * cells * bins];
    for y in 0..h {
        for x in 0..w {
            let gx = at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y);
            let gy = at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1));
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(PI);
            let bin = ((theta / PI * bins as f64) as usize).min(bins - 1);
            let (cx, cy) = (x * cells / w, y * cells / h);
            hist[(cy * cells + cx) * bins + bin] += mag;
        }
    }
    for cell in hist.chunks_mut(bins) {
        let n = cell.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in cell.iter_mut() {
            *v /= n + CELL_EPS;
        }
    }
    FeatureVector { values: hist }.l2_normalized()
}
