//! Linear detectors: training, scoring, windowed detection and
//! non-maximum suppression.

mod svm;

pub use svm::{optimal_bias, svm_objective, train_svm, SvmHyper, TrainingMeta};

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Extractor, FeatureVector};
use crate::imaging::RgbImage;
use crate::patches::{iou, propose, BBox, ProposalSpec};
use crate::scene::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassifierFile", into = "ClassifierFile")]
pub struct LinearClassifier {
    pub category: String,
    pub w: Vec<f64>,
    pub b: f64,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifierFile {
    category: String,
    dim: usize,
    w: Vec<f64>,
    b: f64,
    metadata: TrainingMeta,
}

impl From<LinearClassifier> for ClassifierFile {
    fn from(c: LinearClassifier) -> Self {
        Self {
            category: c.category,
            dim: c.w.len(),
            w: c.w,
            b: c.b,
            metadata: c.meta,
        }
    }
}

impl TryFrom<ClassifierFile> for LinearClassifier {
    type Error = String;

    fn try_from(f: ClassifierFile) -> std::result::Result<Self, String> {
        if f.w.len() != f.dim {
            return Err(format!("dim {} but {} weights", f.dim, f.w.len()));
        }
        if !f.b.is_finite() || f.w.iter().any(|v| !v.is_finite()) {
            return Err("non-finite classifier parameter".into());
        }
        Ok(Self {
            category: f.category,
            w: f.w,
            b: f.b,
            meta: f.metadata,
        })
    }
}

impl LinearClassifier {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `w . f + b`.
    pub fn score(&self, f: &FeatureVector) -> Result<f64> {
        if f.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: f.dim(),
            });
        }
        Ok(f.dot(&self.w) + self.b)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BBox,
    pub score: f64,
    pub category: String,
}

/// Descending score, then ascending (image id, box).
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| a.bbox.cmp(&b.bbox))
}

/// Greedy non-maximum suppression: keep the best remaining detection and drop
/// every other one overlapping it by IoU above `thresh`. Detections in
/// different images never suppress each other.
pub fn nms(dets: &[Detection], thresh: f64) -> Result<Vec<Detection>> {
    if !(0.0..1.0).contains(&thresh) {
        return Err(Error::invalid("nms", format!("threshold must be in [0, 1), got {thresh}")));
    }
    let mut sorted = dets.to_vec();
    sorted.sort_by(detection_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        let suppressed = kept
            .iter()
            .any(|k| k.image_id == d.image_id && iou(&k.bbox, &d.bbox) > thresh);
        if !suppressed {
            kept.push(d);
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSpec {
    pub nms_thresh: f64,
    pub score_floor: f64,
}

impl Default for DetectSpec {
    fn default() -> Self {
        Self {
            nms_thresh: 0.3,
            score_floor: -1.0,
        }
    }
}

fn check_dims(classifiers: &[LinearClassifier], extractor: &Extractor) -> Result<()> {
    for c in classifiers {
        if c.dim() != extractor.dim() {
            return Err(Error::DimMismatch {
                expected: extractor.dim(),
                got: c.dim(),
            });
        }
    }
    Ok(())
}

fn extract_all(extractor: &Extractor, image: &RgbImage, image_id: &str, proposals: &[BBox]) -> Result<Vec<FeatureVector>> {
    proposals
        .par_iter()
        .map(|b| extractor.extract(image, image_id, b))
        .collect()
}

/// Score every proposal, drop those below the floor, and suppress overlaps.
pub fn detect(
    clf: &LinearClassifier,
    extractor: &Extractor,
    image: &RgbImage,
    image_id: &str,
    proposals: &[BBox],
    spec: &DetectSpec,
) -> Result<Vec<Detection>> {
    let mut out = detect_many(std::slice::from_ref(clf), extractor, image, image_id, proposals, spec)?;
    Ok(out.pop().unwrap_or_default())
}

/// [`detect`] for several classifiers sharing one feature pass. Returns one
/// list per classifier, in input order.
pub fn detect_many(
    classifiers: &[LinearClassifier],
    extractor: &Extractor,
    image: &RgbImage,
    image_id: &str,
    proposals: &[BBox],
    spec: &DetectSpec,
) -> Result<Vec<Vec<Detection>>> {
    if proposals.is_empty() {
        return Err(Error::invalid("detect", "no proposals"));
    }
    check_dims(classifiers, extractor)?;
    let feats = extract_all(extractor, image, image_id, proposals)?;
    detect_from_features(classifiers, image_id, proposals, &feats, spec)
}

/// Detection on features already extracted for `proposals`.
pub fn detect_from_features(
    classifiers: &[LinearClassifier],
    image_id: &str,
    proposals: &[BBox],
    feats: &[FeatureVector],
    spec: &DetectSpec,
) -> Result<Vec<Vec<Detection>>> {
    classifiers
        .iter()
        .map(|clf| {
            let mut dets = Vec::new();
            for (b, f) in proposals.iter().zip(feats) {
                let score = clf.score(f)?;
                if score >= spec.score_floor {
                    dets.push(Detection {
                        image_id: image_id.to_string(),
                        bbox: *b,
                        score,
                        category: clf.category.clone(),
                    });
                }
            }
            nms(&dets, spec.nms_thresh)
        })
        .collect()
}

/// The `k` highest-scoring proposals that overlap no ground-truth box by
/// more than `neg_max_iou`, across every image in `ds`. Ties are broken by
/// (image id, box).
pub fn mine_hard_negatives(
    clf: &LinearClassifier,
    ds: &Dataset,
    extractor: &Extractor,
    proposals: &ProposalSpec,
    neg_max_iou: f64,
    k: usize,
) -> Result<Vec<(String, BBox)>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    check_dims(std::slice::from_ref(clf), extractor)?;
    let per_image: Vec<Vec<Detection>> = ds
        .items
        .par_iter()
        .map(|item| -> Result<Vec<Detection>> {
            let cands: Vec<BBox> = propose(item.bounds(), proposals)?
                .into_iter()
                .filter(|p| item.boxes.iter().all(|g| iou(p, &g.bbox) <= neg_max_iou))
                .collect();
            let feats = extract_all(extractor, &item.image, &item.id, &cands)?;
            cands
                .iter()
                .zip(&feats)
                .map(|(b, f)| {
                    Ok(Detection {
                        image_id: item.id.clone(),
                        bbox: *b,
                        score: clf.score(f)?,
                        category: clf.category.clone(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<Detection> = per_image.into_iter().flatten().collect();
    all.sort_by(detection_order);
    all.truncate(k);
    Ok(all.into_iter().map(|d| (d.image_id, d.bbox)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Backend;

    fn det(id: &str, b: (i32, i32, i32, i32), score: f64) -> Detection {
        Detection {
            image_id: id.into(),
            bbox: BBox::new(b.0, b.1, b.2, b.3).unwrap(),
            score,
            category: "c".into(),
        }
    }

    fn clf(w: Vec<f64>, b: f64) -> LinearClassifier {
        LinearClassifier {
            category: "c".into(),
            w,
            b,
            meta: TrainingMeta {
                c: 1.0,
                epochs: 0,
                seed: 0,
                final_objective: 0.0,
                objectives: vec![],
            },
        }
    }

    #[test]
    fn score_is_affine() {
        let c = clf(vec![0.0, 0.0], 0.7);
        assert_eq!(c.score(&FeatureVector::new(vec![3.0, 1.0]).unwrap()).unwrap(), 0.7);
        let c = clf(vec![1.0, -2.0], 0.7);
        assert_eq!(c.score(&FeatureVector::zeros(2)).unwrap(), 0.7);
        assert!(c.score(&FeatureVector::zeros(3)).is_err());
    }

    #[test]
    fn nms_examples() {
        let one = vec![det("a", (0, 0, 10, 10), 0.5)];
        assert_eq!(nms(&one, 0.3).unwrap(), one);
        let twins = vec![det("a", (0, 0, 10, 10), 0.8), det("a", (0, 0, 10, 10), 0.9)];
        assert_eq!(nms(&twins, 0.5).unwrap(), vec![twins[1].clone()]);
        // Two boxes overlapping a third by IoU 0.6 each must overlap one
        // another, so the chain uses A-C = 1/3, still below the threshold.
        let a = det("a", (0, 0, 8, 1), 0.9);
        let b = det("a", (2, 0, 10, 1), 0.8);
        let c = det("a", (4, 0, 12, 1), 0.7);
        assert!((iou(&a.bbox, &b.bbox) - 0.6).abs() < 1e-12);
        assert!((iou(&b.bbox, &c.bbox) - 0.6).abs() < 1e-12);
        assert_eq!(iou(&a.bbox, &c.bbox), 4.0 / 12.0);
        let kept = nms(&[c.clone(), a.clone(), b], 0.5).unwrap();
        assert_eq!(kept, vec![a, c]);
    }

    #[test]
    fn score_floor_infinity_gives_nothing() {
        let img = RgbImage::new(16, 16, [0.5; 3]);
        let ex = Extractor::new(Backend::Pixels { side: 2 }).unwrap();
        let c = clf(vec![0.0; 12], 1.0);
        let props = vec![BBox::new(0, 0, 8, 8).unwrap()];
        let spec = DetectSpec {
            score_floor: f64::INFINITY,
            ..DetectSpec::default()
        };
        assert!(detect(&c, &ex, &img, "i", &props, &spec).unwrap().is_empty());
        let dets = detect(&c, &ex, &img, "i", &props, &DetectSpec::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, props[0]);
        assert!(matches!(
            detect(&clf(vec![0.0; 3], 0.0), &ex, &img, "i", &props, &spec),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn classifier_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let c = clf(vec![0.25, -1.5], 0.125);
        c.save(&path).unwrap();
        assert_eq!(LinearClassifier::load(&path).unwrap(), c);
        let text = fs::read_to_string(&path).unwrap().replace("\"dim\": 2", "\"dim\": 3");
        fs::write(&path, text).unwrap();
        assert!(LinearClassifier::load(&path).is_err());
    }
}
