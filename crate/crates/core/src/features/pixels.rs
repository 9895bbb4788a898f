use super::FeatureVector;
use crate::imaging::RgbImage;

/// Resize to `side x side`, flatten RGB row-major, L2-normalize.
pub fn extract_pixels(patch: &RgbImage, side: usize) -> FeatureVector {
    let resized = patch.resize(side, side);
    let values = resized
        .pixels()
        .iter()
        .flat_map(|p| p.iter().map(|&c| c as f64))
        .collect();
    FeatureVector { values }.l2_normalized()
}
