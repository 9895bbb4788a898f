//! Box arithmetic, positive/negative patch sampling, sliding-window
//! proposals, and patch cropping.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::RgbImage;

/// Integer pixel box with exclusive upper corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BBox {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl BBox {
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Result<Self> {
        if x0 < x1 && y0 < y1 {
            Ok(Self { x0, y0, x1, y1 })
        } else {
            Err(Error::invalid(
                "box",
                format!("({x0}, {y0}, {x1}, {y1}) has no area"),
            ))
        }
    }

    pub fn full(bounds: ImageBounds) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: bounds.width as i32,
            y1: bounds.height as i32,
        }
    }

    pub fn width(&self) -> i32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> i64 {
        self.width() as i64 * self.height() as i64
    }

    pub fn intersection_area(&self, other: &BBox) -> i64 {
        let w = (self.x1.min(other.x1) - self.x0.max(other.x0)).max(0) as i64;
        let h = (self.y1.min(other.y1) - self.y0.max(other.y0)).max(0) as i64;
        w * h
    }

    pub fn translate(&self, dx: i32, dy: i32) -> BBox {
        BBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    /// Clip to the image; `None` if nothing with positive area remains.
    pub fn clip(&self, bounds: ImageBounds) -> Option<BBox> {
        let b = BBox {
            x0: self.x0.max(0),
            y0: self.y0.max(0),
            x1: self.x1.min(bounds.width as i32),
            y1: self.y1.min(bounds.height as i32),
        };
        (b.x0 < b.x1 && b.y0 < b.y1).then_some(b)
    }

    pub fn within(&self, bounds: ImageBounds) -> bool {
        self.x0 >= 0
            && self.y0 >= 0
            && self.x1 <= bounds.width as i32
            && self.y1 <= bounds.height as i32
            && self.x0 < self.x1
            && self.y0 < self.y1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageBounds {
    pub width: usize,
    pub height: usize,
}

impl ImageBounds {
    pub fn of(image: &RgbImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
        }
    }

    fn short_side(&self) -> f64 {
        self.width.min(self.height) as f64
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSpec {
    pub pos_min_iou: f64,
    pub neg_max_iou: f64,
    /// A negative may not have more than this fraction of its own area
    /// inside any ground-truth box.
    pub neg_max_coverage: f64,
    pub positives_per_box: usize,
    pub negatives_per_image: usize,
    pub jitter_fraction: f64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            pos_min_iou: 0.7,
            neg_max_iou: 0.3,
            neg_max_coverage: 0.5,
            positives_per_box: 4,
            negatives_per_image: 8,
            jitter_fraction: 0.15,
        }
    }
}

impl SamplerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.neg_max_iou
            && self.neg_max_iou < self.pos_min_iou
            && self.pos_min_iou <= 1.0)
        {
            return Err(Error::invalid(
                "sampler",
                "need 0 <= neg_max_iou < pos_min_iou <= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.neg_max_coverage) {
            return Err(Error::invalid("sampler", "neg_max_coverage must lie in [0, 1]"));
        }
        if !(self.jitter_fraction >= 0.0 && self.jitter_fraction.is_finite()) {
            return Err(Error::invalid("sampler", "jitter_fraction must be >= 0"));
        }
        Ok(())
    }
}

/// Sampled boxes plus a flag raised when the quota could not be met.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sampled {
    pub boxes: Vec<BBox>,
    pub short: bool,
}

const RETRIES_PER_BOX: usize = 50;

/// The ground-truth box followed by jittered copies, each keeping IoU of at
/// least `pos_min_iou` with it.
pub fn sample_positives(
    gt: &BBox,
    spec: &SamplerSpec,
    bounds: ImageBounds,
    rng: &mut impl Rng,
) -> Result<Sampled> {
    spec.validate()?;
    if !gt.within(bounds) {
        return Err(Error::invalid("box", "ground truth outside image bounds"));
    }
    let want = spec.positives_per_box;
    let mut boxes = Vec::with_capacity(want);
    if want == 0 {
        return Ok(Sampled { boxes, short: false });
    }
    boxes.push(*gt);
    let jx = spec.jitter_fraction * gt.width() as f64;
    let jy = spec.jitter_fraction * gt.height() as f64;
    let mut attempts = 0;
    while boxes.len() < want && attempts < RETRIES_PER_BOX * want {
        attempts += 1;
        let mut offset = |j: f64| {
            if j > 0.0 {
                rng.gen_range(-j..=j).round() as i32
            } else {
                0
            }
        };
        let candidate = BBox {
            x0: gt.x0 + offset(jx),
            y0: gt.y0 + offset(jy),
            x1: gt.x1 + offset(jx),
            y1: gt.y1 + offset(jy),
        };
        let Some(candidate) = candidate.clip(bounds) else {
            continue;
        };
        if iou(&candidate, gt) >= spec.pos_min_iou {
            boxes.push(candidate);
        }
    }
    let short = boxes.len() < want;
    if short {
        log::warn!("positive quota not met: {} of {want}", boxes.len());
    }
    Ok(Sampled { boxes, short })
}

/// Whether `candidate` is an acceptable background window given the
/// ground-truth boxes of the image.
pub fn is_negative(candidate: &BBox, gt_boxes: &[BBox], spec: &SamplerSpec) -> bool {
    gt_boxes.iter().all(|g| {
        iou(candidate, g) <= spec.neg_max_iou
            && candidate.intersection_area(g) as f64 <= spec.neg_max_coverage * candidate.area() as f64
    })
}

/// Random background windows: side log-uniform in 10%..80% of the short
/// image side, aspect uniform in [1/2, 2], rejected when they overlap any
/// ground-truth box too much.
pub fn sample_negatives(
    gt_boxes: &[BBox],
    spec: &SamplerSpec,
    bounds: ImageBounds,
    rng: &mut impl Rng,
) -> Result<Sampled> {
    spec.validate()?;
    let want = spec.negatives_per_image;
    let short_side = bounds.short_side();
    let (lo, hi) = ((0.1 * short_side).ln(), (0.8 * short_side).ln());
    let mut boxes = Vec::with_capacity(want);
    let mut attempts = 0;
    while boxes.len() < want && attempts < RETRIES_PER_BOX * want {
        attempts += 1;
        let side = rng.gen_range(lo..=hi).exp();
        let aspect: f64 = rng.gen_range(0.5..=2.0);
        let w = ((side * aspect.sqrt()).round() as usize).clamp(1, bounds.width);
        let h = ((side / aspect.sqrt()).round() as usize).clamp(1, bounds.height);
        let x0 = rng.gen_range(0..=bounds.width - w) as i32;
        let y0 = rng.gen_range(0..=bounds.height - h) as i32;
        let candidate = BBox {
            x0,
            y0,
            x1: x0 + w as i32,
            y1: y0 + h as i32,
        };
        if is_negative(&candidate, gt_boxes, spec) {
            boxes.push(candidate);
        }
    }
    let short = boxes.len() < want;
    if short {
        log::warn!("negative quota not met: {} of {want}", boxes.len());
    }
    Ok(Sampled { boxes, short })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalSpec {
    /// Window sides in pixels (geometric mean of width and height).
    pub scales: Vec<f64>,
    /// Stride as a fraction of the scale.
    pub stride_fraction: f64,
    /// Width / height ratios.
    pub aspects: Vec<f64>,
}

impl Default for ProposalSpec {
    fn default() -> Self {
        Self {
            scales: vec![20.0, 28.0, 38.0, 50.0],
            stride_fraction: 0.25,
            aspects: vec![0.5, 1.0, 2.0],
        }
    }
}

/// Sliding-window proposals: per scale and aspect, a grid with stride
/// `stride_fraction * scale`, clipped to the image and deduplicated (first
/// occurrence kept).
pub fn propose(bounds: ImageBounds, spec: &ProposalSpec) -> Result<Vec<BBox>> {
    if !(spec.stride_fraction > 0.0) {
        return Err(Error::invalid("proposals", "stride_fraction must be positive"));
    }
    if spec.scales.iter().any(|s| !(*s >= 1.0)) || spec.aspects.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::invalid("proposals", "scales must be >= 1 and aspects > 0"));
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for &scale in &spec.scales {
        let stride = ((spec.stride_fraction * scale).round() as usize).max(1);
        for &aspect in &spec.aspects {
            let w = ((scale * aspect.sqrt()).round() as usize).clamp(1, bounds.width);
            let h = ((scale / aspect.sqrt()).round() as usize).clamp(1, bounds.height);
            let nx = (bounds.width - w) / stride + 1;
            let ny = (bounds.height - h) / stride + 1;
            for j in 0..ny {
                for i in 0..nx {
                    let (x0, y0) = ((i * stride) as i32, (j * stride) as i32);
                    let b = BBox {
                        x0,
                        y0,
                        x1: x0 + w as i32,
                        y1: y0 + h as i32,
                    };
                    if seen.insert(b) {
                        out.push(b);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Bilinear resample of `bbox` to a square `out_size x out_size` patch.
pub fn crop_resize(image: &RgbImage, bbox: &BBox, out_size: usize) -> Result<RgbImage> {
    if out_size == 0 {
        return Err(Error::invalid("patch", "output size must be positive"));
    }
    if !bbox.within(ImageBounds::of(image)) {
        return Err(Error::invalid(
            "patch",
            format!("box {bbox:?} is degenerate or outside the image"),
        ));
    }
    Ok(image.resample_region(
        (
            bbox.x0 as usize,
            bbox.y0 as usize,
            bbox.x1 as usize,
            bbox.y1 as usize,
        ),
        out_size,
        out_size,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn b(x0: i32, y0: i32, x1: i32, y1: i32) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    const B100: ImageBounds = ImageBounds { width: 100, height: 100 };

    #[test]
    fn iou_examples() {
        assert_eq!(iou(&b(0, 0, 10, 10), &b(0, 0, 10, 10)), 1.0);
        assert_eq!(iou(&b(0, 0, 10, 10), &b(20, 20, 30, 30)), 0.0);
        assert_eq!(iou(&b(0, 0, 10, 10), &b(10, 0, 20, 10)), 0.0);
        assert!((iou(&b(0, 0, 10, 10), &b(5, 5, 15, 15)) - 25.0 / 175.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_box_rejected() {
        assert!(BBox::new(3, 3, 3, 5).is_err());
    }

    #[test]
    fn zero_jitter_gives_copies() {
        let spec = SamplerSpec { jitter_fraction: 0.0, positives_per_box: 5, ..Default::default() };
        let gt = b(10, 20, 40, 60);
        let s = sample_positives(&gt, &spec, B100, &mut stream(1)).unwrap();
        assert_eq!(s.boxes, vec![gt; 5]);
        assert!(!s.short);
    }

    #[test]
    fn positives_respect_iou_and_seed() {
        let spec = SamplerSpec { positives_per_box: 20, jitter_fraction: 0.3, ..Default::default() };
        let gt = b(0, 30, 50, 90);
        let a = sample_positives(&gt, &spec, B100, &mut stream(4)).unwrap();
        let again = sample_positives(&gt, &spec, B100, &mut stream(4)).unwrap();
        assert_eq!(a, again);
        assert!(a.boxes.iter().all(|x| iou(x, &gt) >= 0.7 && x.within(B100)));
    }

    #[test]
    fn negatives_without_objects_are_all_accepted() {
        let spec = SamplerSpec { negatives_per_image: 30, ..Default::default() };
        let s = sample_negatives(&[], &spec, B100, &mut stream(2)).unwrap();
        assert_eq!(s.boxes.len(), 30);
        assert!(!s.short);
        for x in &s.boxes {
            assert!(x.within(B100));
            let side = ((x.width() * x.height()) as f64).sqrt();
            assert!((9.0..=81.0).contains(&side), "{x:?}");
        }
    }

    #[test]
    fn full_frame_object_leaves_no_negatives() {
        let spec = SamplerSpec { negatives_per_image: 5, ..Default::default() };
        let s = sample_negatives(&[BBox::full(B100)], &spec, B100, &mut stream(3)).unwrap();
        assert!(s.boxes.is_empty());
        assert!(s.short);
    }

    #[test]
    fn negatives_keep_away_from_objects() {
        let spec = SamplerSpec { negatives_per_image: 40, ..Default::default() };
        let gts = [b(10, 10, 50, 50), b(60, 55, 95, 90)];
        let s = sample_negatives(&gts, &spec, B100, &mut stream(5)).unwrap();
        assert!(!s.boxes.is_empty());
        for x in &s.boxes {
            for g in &gts {
                assert!(iou(x, g) <= 0.3);
            }
        }
    }

    #[test]
    fn single_window_proposal() {
        let spec = ProposalSpec { scales: vec![100.0], stride_fraction: 1.0, aspects: vec![1.0] };
        assert_eq!(propose(B100, &spec).unwrap(), vec![BBox::full(B100)]);
    }

    #[test]
    fn proposal_grid_count() {
        let spec = ProposalSpec { scales: vec![50.0], stride_fraction: 0.5, aspects: vec![1.0] };
        let p = propose(B100, &spec).unwrap();
        assert_eq!(p.len(), 9);
        let all = propose(B100, &ProposalSpec::default()).unwrap();
        assert!(all.iter().all(|x| x.within(B100)));
        let unique: HashSet<_> = all.iter().collect();
        assert_eq!(unique.len(), all.len());
    }

    #[test]
    fn oversized_windows_are_clipped() {
        let bounds = ImageBounds { width: 40, height: 30 };
        let spec = ProposalSpec { scales: vec![60.0], stride_fraction: 0.5, aspects: vec![0.5, 1.0, 2.0] };
        let p = propose(bounds, &spec).unwrap();
        assert!(p.iter().all(|x| x.within(bounds)));
        assert!(p.contains(&BBox::full(bounds)));
    }

    #[test]
    fn crop_identity_and_constant() {
        let img = RgbImage::from_fn(6, 6, |x, y| [x as f32 / 6.0, y as f32 / 6.0, 0.5]);
        assert_eq!(crop_resize(&img, &b(0, 0, 6, 6), 6).unwrap(), img);
        let flat = RgbImage::new(20, 10, [0.2, 0.4, 0.6]);
        let patch = crop_resize(&flat, &b(3, 1, 17, 9), 5).unwrap();
        assert!(patch.pixels().iter().all(|p| *p == [0.2, 0.4, 0.6]));
        assert!(crop_resize(&flat, &b(15, 0, 25, 5), 4).is_err());
    }

    #[test]
    fn checkerboard_upscale_matches_hand_values() {
        // [[0, 1], [1, 0]] sampled at -0.25, 0.25, 0.75, 1.25 (clamped to [0, 1]).
        let img = RgbImage::from_fn(2, 2, |x, y| [((x + y) % 2) as f32; 3]);
        let patch = crop_resize(&img, &b(0, 0, 2, 2), 4).unwrap();
        let coords = [0.0f32, 0.25, 0.75, 1.0];
        for (j, &v) in coords.iter().enumerate() {
            for (i, &u) in coords.iter().enumerate() {
                // f(u, v) = u + v - 2uv on the unit square.
                let expected = u + v - 2.0 * u * v;
                assert!((patch.get(i, j)[0] - expected).abs() < 1e-6, "({i},{j})");
            }
        }
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-50i32..50, -50i32..50, 1i32..40, 1i32..40).prop_map(|(x, y, w, h)| BBox {
            x0: x,
            y0: y,
            x1: x + w,
            y1: y + h,
        })
    }

    proptest! {
        #[test]
        fn iou_properties(a in arb_box(), c in arb_box(), dx in -30i32..30, dy in -30i32..30) {
            let v = iou(&a, &c);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert_eq!(v == 1.0, a == c);
            prop_assert_eq!(v, iou(&a.translate(dx, dy), &c.translate(dx, dy)));
        }
    }
}
