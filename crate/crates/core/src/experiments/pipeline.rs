//! Shared train/detect/evaluate plumbing used by every protocol.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{ClassifierSection, ExperimentConfig};
use crate::classify::{detect_from_features, mine_hard_negatives, train_svm, Detection, LinearClassifier};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::features::{train_adapter, Adapter, AdapterHyper, Extractor, FeatureVector};
use crate::patches::{propose, sample_negatives, sample_positives, BBox, ProposalSpec, SamplerSpec};
use crate::rng::{derive_seed, stream};
use crate::scene::Dataset;

/// Training patches with their features. A label is a category index, or
/// `None` for background.
#[derive(Debug, Clone, Default)]
pub struct PatchSet {
    pub feats: Vec<FeatureVector>,
    pub labels: Vec<Option<usize>>,
}

impl PatchSet {
    pub fn len(&self) -> usize {
        self.feats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feats.is_empty()
    }

    pub fn extend(&mut self, other: PatchSet) {
        self.feats.extend(other.feats);
        self.labels.extend(other.labels);
    }

    /// Features passed through the extractor's adapter, if it has one.
    pub fn adapted(&self, extractor: &Extractor) -> Result<PatchSet> {
        Ok(PatchSet {
            feats: self
                .feats
                .par_iter()
                .map(|f| extractor.apply_adapter(f.clone()))
                .collect::<Result<_>>()?,
            labels: self.labels.clone(),
        })
    }
}

/// Sample positives around every labeled box and random background windows
/// from every image, and extract their features. Sampling for an item
/// depends only on `seed` and the item id.
pub fn collect_patches(
    ds: &Dataset,
    categories: &[String],
    sampler: &SamplerSpec,
    extractor: &Extractor,
    seed: u64,
) -> Result<PatchSet> {
    let per_item: Vec<PatchSet> = ds
        .items
        .par_iter()
        .map(|item| -> Result<PatchSet> {
            let mut rng = stream(derive_seed(seed, &item.id));
            let bounds = item.bounds();
            let mut boxes: Vec<(BBox, Option<usize>)> = Vec::new();
            for b in &item.boxes {
                let Some(idx) = categories.iter().position(|c| *c == b.category) else {
                    return Err(Error::Record {
                        id: item.id.clone(),
                        msg: format!("unexpected category `{}`", b.category),
                    });
                };
                for p in sample_positives(&b.bbox, sampler, bounds, &mut rng)?.boxes {
                    boxes.push((p, Some(idx)));
                }
            }
            let gt: Vec<BBox> = item.boxes.iter().map(|b| b.bbox).collect();
            for n in sample_negatives(&gt, sampler, bounds, &mut rng)?.boxes {
                boxes.push((n, None));
            }
            let feats = boxes
                .iter()
                .map(|(b, _)| extractor.extract(&item.image, &item.id, b))
                .collect::<Result<_>>()?;
            Ok(PatchSet {
                feats,
                labels: boxes.into_iter().map(|(_, l)| l).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = PatchSet::default();
    for p in per_item {
        out.extend(p);
    }
    Ok(out)
}

/// Fit an adapter on `patches`, with background as an extra class.
pub fn fit_adapter(patches: &PatchSet, num_categories: usize, hyper: &AdapterHyper) -> Result<Adapter> {
    let labels: Vec<usize> = patches.labels.iter().map(|l| l.unwrap_or(num_categories)).collect();
    train_adapter(&patches.feats, &labels, hyper)
}

/// One-vs-rest SVM per category: positives of the category against
/// background and every other category.
pub fn train_classifiers(
    patches: &PatchSet,
    categories: &[String],
    cls: &ClassifierSection,
    seed: u64,
) -> Result<Vec<LinearClassifier>> {
    categories
        .par_iter()
        .enumerate()
        .map(|(idx, category)| {
            let labels: Vec<f64> = patches
                .labels
                .iter()
                .map(|l| if *l == Some(idx) { 1.0 } else { -1.0 })
                .collect();
            if !labels.iter().any(|&y| y > 0.0) {
                return Err(Error::EmptyCategory(category.clone()));
            }
            train_svm(&patches.feats, &labels, category, &cls.svm(derive_seed(seed, category)))
                .map_err(|e| e.context(format!("training `{category}`")))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Detector {
    pub extractor: Extractor,
    pub classifiers: Vec<LinearClassifier>,
}

/// Full training: patches, optional adapter, SVMs, and the optional
/// hard-negative round.
pub fn train_detector(
    train: &Dataset,
    categories: &[String],
    cfg: &ExperimentConfig,
    base: &Extractor,
    seed: u64,
) -> Result<Detector> {
    let base_patches = collect_patches(train, categories, &cfg.sampler, base, derive_seed(seed, "patches"))?;
    let extractor = if cfg.extractor.adapter {
        let hyper = AdapterHyper {
            seed: derive_seed(seed, "adapter"),
            ..cfg.extractor.adapter_hyper
        };
        base.with_adapter(fit_adapter(&base_patches, categories.len(), &hyper)?)?
    } else {
        base.base()
    };
    let patches = base_patches.adapted(&extractor)?;
    let svm_seed = derive_seed(seed, "svm");
    let mut classifiers = train_classifiers(&patches, categories, &cfg.classifier, svm_seed)?;
    if cfg.classifier.hard_negatives > 0 {
        classifiers = hard_negative_round(&classifiers, &patches, train, cfg, &extractor, svm_seed)?;
    }
    Ok(Detector { extractor, classifiers })
}

fn hard_negative_round(
    classifiers: &[LinearClassifier],
    patches: &PatchSet,
    train: &Dataset,
    cfg: &ExperimentConfig,
    extractor: &Extractor,
    seed: u64,
) -> Result<Vec<LinearClassifier>> {
    let by_id: BTreeMap<&str, usize> = train.items.iter().enumerate().map(|(i, it)| (it.id.as_str(), i)).collect();
    classifiers
        .iter()
        .map(|clf| {
            let mined = mine_hard_negatives(
                clf,
                train,
                extractor,
                &cfg.classifier.proposals,
                cfg.sampler.neg_max_iou,
                cfg.classifier.hard_negatives,
            )?;
            let mut feats = patches.feats.clone();
            let mut labels: Vec<f64> = patches
                .labels
                .iter()
                .map(|l| match l {
                    Some(i) if classifiers[*i].category == clf.category => 1.0,
                    _ => -1.0,
                })
                .collect();
            for (id, b) in &mined {
                let item = &train.items[by_id[id.as_str()]];
                feats.push(extractor.extract(&item.image, &item.id, b)?);
                labels.push(-1.0);
            }
            train_svm(&feats, &labels, &clf.category, &cfg.classifier.svm(derive_seed(seed, &clf.category)))
        })
        .collect()
}

/// Proposals and base features for every test image, computed once and
/// reused across detectors sharing the base extractor.
#[derive(Debug, Clone)]
pub struct TestBank {
    pub entries: Vec<(String, Vec<BBox>, Vec<FeatureVector>)>,
}

impl TestBank {
    pub fn build(test: &Dataset, base: &Extractor, proposals: &ProposalSpec) -> Result<Self> {
        let entries = test
            .items
            .par_iter()
            .map(|item| {
                let props = propose(item.bounds(), proposals)?;
                let feats = props
                    .iter()
                    .map(|b| base.extract_base(&item.image, &item.id, b))
                    .collect::<Result<_>>()?;
                Ok((item.id.clone(), props, feats))
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn detections(&self, det: &Detector, cls: &ClassifierSection) -> Result<Vec<Detection>> {
        let spec = cls.detect_spec();
        let per_image: Vec<Vec<Detection>> = self
            .entries
            .par_iter()
            .map(|(id, props, base)| {
                let feats: Vec<FeatureVector> = base
                    .iter()
                    .map(|f| det.extractor.apply_adapter(f.clone()))
                    .collect::<Result<_>>()?;
                Ok(detect_from_features(&det.classifiers, id, props, &feats, &spec)?
                    .into_iter()
                    .flatten()
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(per_image.into_iter().flatten().collect())
    }

    /// Per-category AP of `det` on `test`.
    pub fn evaluate(&self, test: &Dataset, det: &Detector, cls: &ClassifierSection) -> Result<BTreeMap<String, f64>> {
        let dets = self.detections(det, cls)?;
        Ok(evaluate(&dets, test, cls.ap_method, cls.iou_thresh))
    }
}
